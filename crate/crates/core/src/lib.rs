//! Boundary loss for highly unbalanced binary segmentation.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: N-D scalar grids, binary masks and probability maps with
//!   physical spacing, plus the portable `SGRID` file format.
//! - [`edt`]: exact separable Euclidean distance transform with anisotropic
//!   spacing.
//! - [`levelset`]: signed level-set maps of a ground-truth region, discrete
//!   boundaries, and two independent measures of boundary change (a ray-cast
//!   contour distance and its regional-integral counterpart).
//! - [`losses`]: boundary loss, generalized Dice, distance-weighted
//!   cross-entropy, focal and Hausdorff losses, each with an analytic
//!   gradient with respect to the foreground probability.
//! - [`schedule`]: per-epoch weighting of the regional and boundary terms.
//! - [`model`]: a small encoder-decoder segmentation net with hand-written
//!   reverse mode, Adam and a plateau learning-rate rule.
//! - [`metrics`]: Dice similarity and 95th-percentile Hausdorff distance.
//! - [`synthdata`]: deterministic generator of tiny-lesion segmentation tasks.
//!
//! All grids are row-major with axis order `(y, x)` in 2D and `(z, y, x)` in
//! 3D, so gradient grids, distance maps and masks index identically.

pub mod edt;
pub mod error;
pub mod grid;
pub mod levelset;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod schedule;
pub mod synthdata;

pub use error::{Error, Result};
pub use grid::{threshold, BinaryMask, Geometry, ProbMap, ScalarGrid};
pub use levelset::{signed_distance, DistanceMode, LevelSetMap};
pub use losses::{HyperParams, LossResult, RegionalLoss};
pub use schedule::{AlphaSchedule, Strategy};
