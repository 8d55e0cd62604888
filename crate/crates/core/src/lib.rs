//! Metric-scale monocular egomotion and depth by direct optimization.
//!
//! The pipeline has three steps:
//!
//! 1. **Coarse depth calibration** ([`scale`]): sparse LiDAR returns are
//!    projected into the image ([`geometry::project_lidar`]) and compared
//!    against an unscaled depth prediction to obtain a per-frame factor ε.
//!    Multiplying the prediction by ε gives a coarse metric depth.
//! 2. **Coarse pose recovery** ([`trainer::run_stage1`]): relative poses in a
//!    sliding window are optimized against a forward view-synthesis loss
//!    with the coarse depths held fixed.
//! 3. **Bi-directional refinement** ([`trainer::run_stage2`]): poses and a
//!    learnable per-frame [`depthfield::DepthField`] are refined jointly under
//!    forward and backward view-synthesis losses plus edge-aware smoothness.
//!
//! [`eval`] provides KITTI-style segment errors, ATE and depth metrics;
//! [`synth`] renders ray-cast scenes with exact ground truth so every part
//! of the pipeline can be checked against an oracle.

pub mod config;
pub mod dataio;
pub mod depthfield;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod losses;
pub mod numeric;
pub mod scale;
pub mod synth;
pub mod trainer;

#[doc(hidden)]
pub mod cli;

pub use error::{Error, Result};
