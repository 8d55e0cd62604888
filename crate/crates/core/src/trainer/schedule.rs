use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};

/// When stage 1 has converged: the mean per-pair translation norm varies by
/// less than `tolerance` (relative) over the last `window` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchCriterion {
    pub window: usize,
    pub tolerance: f64,
    pub min_epochs: usize,
}

impl Default for SwitchCriterion {
    fn default() -> Self {
        SwitchCriterion {
            window: 5,
            tolerance: 0.01,
            min_epochs: 30,
        }
    }
}

impl SwitchCriterion {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 || !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("invalid stage switch criterion {self:?}")));
        }
        Ok(())
    }
}

/// Whether stage 1 may hand over, given the per-epoch mean translation norms
/// so far. The epoch cap is enforced by the caller.
pub fn stage_switch(criterion: &SwitchCriterion, history: &[f64]) -> bool {
    if history.len() < criterion.min_epochs.max(criterion.window) {
        return false;
    }
    let recent = &history[history.len() - criterion.window..];
    let lo = recent.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = recent.iter().map(|x| x.abs()).sum::<f64>() / recent.len() as f64;
    if scale == 0.0 {
        return hi == lo;
    }
    (hi - lo) / scale < criterion.tolerance
}

/// Window start frames for one epoch.
///
/// Starts are drawn without replacement from a fresh shuffle of every valid
/// start index; when an epoch needs more windows than there are starts, the
/// next shuffle is appended.
pub fn epoch_windows(cfg: &TrainConfig, n_frames: usize, stream: u64, epoch: usize) -> Vec<usize> {
    let n_starts = n_frames + 1 - cfg.window_length;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream((stream << 32) | epoch as u64);
    let mut out = Vec::with_capacity(cfg.sequences_per_epoch);
    while out.len() < cfg.sequences_per_epoch {
        let mut perm: Vec<usize> = (0..n_starts).collect();
        perm.shuffle(&mut rng);
        let take = (cfg.sequences_per_epoch - out.len()).min(n_starts);
        out.extend_from_slice(&perm[..take]);
    }
    out
}
