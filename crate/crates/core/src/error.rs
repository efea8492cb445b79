use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid grid values: {0}")]
    Values(String),

    #[error("threshold {0} outside the open interval (0, 1)")]
    InvalidThreshold(f64),

    #[error("grid format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("distance transform needs at least one feature pixel")]
    EmptyFeatureSet,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{failed} of {total} rays left the domain without crossing the other boundary")]
    NoIntersection { failed: usize, total: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("activation cache was produced by parameter generation {cached}, net is at {current}")]
    StaleCache { cached: u64, current: u64 },

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(usize),

    #[error("synthetic data config: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
