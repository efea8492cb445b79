//! Experiment harness for the `boundloss` crate: configuration, training
//! runs with scheduled loss weights, per-epoch metric logs, loss timing and
//! learning-curve emission.

pub mod benchmark;
pub mod config;
pub mod curves;
pub mod data;
mod error;
pub mod experiment;
pub mod log;

pub use config::{BoundaryTerm, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, RunOutcome};
pub use log::{EpochRow, MetricsLog};
