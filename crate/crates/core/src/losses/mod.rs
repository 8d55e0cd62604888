//! View synthesis and the training losses, with analytic gradients.
//!
//! Pose gradients are always taken w.r.t. a left perturbation `exp(δ)·T` of
//! the pair pose `T` (target camera → source camera), twist ordered
//! (translation, rotation).

mod pair;
mod smooth;
mod ssim;
mod synthesize;
mod window;

use serde::{Deserialize, Serialize};

pub use pair::{evaluate_pair, gc_loss, pair_gc_loss, pair_photometric_loss, photometric_from_synthesis, photometric_loss, PairInput, PairLoss, PixelLoss};
pub use smooth::{smoothness_loss, SmoothnessForm};
pub use ssim::{ssim, C1 as SSIM_C1, C2 as SSIM_C2};
pub use synthesize::{synthesize, Synthesis, ValidityMask};
pub use window::{backward_window_loss, forward_window_loss, refine_loss, DepthSource, WindowView};

use crate::error::{Error, Result};
use crate::geometry::Twist;

/// Loss weights. Defaults: L1 0.15, SSIM 0.85, photometric 1, geometric 0.5,
/// bidirectional 1, smoothness 0.1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub l1: f64,
    pub ssim: f64,
    pub photometric: f64,
    pub geometric: f64,
    pub bidirectional: f64,
    pub smoothness: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            l1: 0.15,
            ssim: 0.85,
            photometric: 1.0,
            geometric: 0.5,
            bidirectional: 1.0,
            smoothness: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.l1, self.ssim, self.photometric, self.geometric, self.bidirectional, self.smoothness];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be non-negative: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossOptions {
    pub weights: LossWeights,
    /// Pairs with a smaller fraction of valid warps are dropped.
    pub min_valid_fraction: f64,
    pub smoothness: SmoothnessForm,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            weights: LossWeights::default(),
            min_valid_fraction: 0.25,
            smoothness: SmoothnessForm::default(),
        }
    }
}

/// Scalar loss with gradients for every variable of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBundle {
    pub value: f64,
    /// One entry per adjacent pair.
    pub grad_pose: Vec<Twist>,
    /// One entry per frame: per-pixel for dense depths, per coarse parameter
    /// for learned fields, empty when depths are held fixed.
    pub grad_depth: Vec<Vec<f64>>,
    pub valid_fraction: f64,
    /// Pairs dropped for having too few valid pixels.
    pub degenerate_pairs: Vec<usize>,
}

impl LossBundle {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad_pose.iter().all(Twist::is_finite)
            && self.grad_depth.iter().all(|g| g.iter().all(|x| x.is_finite()))
    }
}
