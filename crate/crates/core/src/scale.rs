//! Depth-scale calibration against projected LiDAR.
//!
//! For each frame the factor `ε = stat(D_v) / stat(D_pred)` is computed with
//! both statistics restricted to the LiDAR-covered pixels, and the coarse
//! metric depth is `ε · D_pred`.

use serde::{Deserialize, Serialize};

use crate::depthfield::{DepthMap, SparseDepthImage};
use crate::error::{Error, Result};
use crate::numeric::{mean, median, sample_std};

pub const DEFAULT_MIN_VALID: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Median,
    Mean,
}

impl Estimator {
    fn apply(self, values: &[f64]) -> f64 {
        match self {
            Estimator::Median => median(values),
            Estimator::Mean => mean(values),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor {
    pub epsilon: f64,
    pub n_valid: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleStats {
    pub mu: f64,
    pub sigma: f64,
}

pub fn estimate_scale(
    d_v: &SparseDepthImage,
    d_pred: &DepthMap,
    estimator: Estimator,
    min_valid: usize,
) -> Result<ScaleFactor> {
    if d_v.width != d_pred.width || d_v.height != d_pred.height {
        return Err(Error::Shape(format!(
            "sparse depth {}x{} vs prediction {}x{}",
            d_v.width, d_v.height, d_pred.width, d_pred.height
        )));
    }
    let idx: Vec<usize> = d_v
        .valid_indices()
        .filter(|&i| d_v.depth[i] > 0.0 && d_pred.data[i] > 0.0)
        .collect();
    if idx.len() < min_valid.max(1) {
        return Err(Error::TooFewValid {
            n_valid: idx.len(),
            required: min_valid.max(1),
        });
    }
    let lidar: Vec<f64> = idx.iter().map(|&i| d_v.depth[i]).collect();
    let pred: Vec<f64> = idx.iter().map(|&i| d_pred.data[i]).collect();
    Ok(ScaleFactor {
        epsilon: estimator.apply(&lidar) / estimator.apply(&pred),
        n_valid: idx.len(),
    })
}

pub fn apply_scale(scale: &ScaleFactor, d_pred: &DepthMap) -> DepthMap {
    d_pred.scaled(scale.epsilon)
}

/// Calibrates every frame of a sequence; returns each frame's factor and
/// coarse metric depth `ε · D_pred`.
pub fn calibrate_frames(
    lidar: &[SparseDepthImage],
    predictions: &[DepthMap],
    estimator: Estimator,
    min_valid: usize,
) -> Result<Vec<(ScaleFactor, DepthMap)>> {
    if lidar.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} LiDAR frames for {} predictions",
            lidar.len(),
            predictions.len()
        )));
    }
    lidar
        .iter()
        .zip(predictions)
        .map(|(v, p)| {
            let s = estimate_scale(v, p, estimator, min_valid)?;
            Ok((s, apply_scale(&s, p)))
        })
        .collect()
}

/// Sample mean and standard deviation of per-frame ratios (needs ≥ 2).
pub fn scale_statistics(ratios: &[f64]) -> Result<ScaleStats> {
    if ratios.len() < 2 {
        return Err(Error::Eval("scale statistics need at least two frames".into()));
    }
    Ok(ScaleStats {
        mu: mean(ratios),
        sigma: sample_std(ratios),
    })
}

/// Per-frame factors of one sequence as written by `metricvo calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationReport {
    pub config_hash: String,
    pub seed: u64,
    pub sequence: String,
    pub estimator: Estimator,
    pub frames: Vec<ScaleFactor>,
    /// Mean and spread of ε over the sequence.
    pub stats: Option<ScaleStats>,
}

impl CalibrationReport {
    pub fn new(config_hash: &str, seed: u64, sequence: &str, estimator: Estimator, frames: Vec<ScaleFactor>) -> Self {
        let eps: Vec<f64> = frames.iter().map(|f| f.epsilon).collect();
        CalibrationReport {
            config_hash: config_hash.to_string(),
            seed,
            sequence: sequence.to_string(),
            estimator,
            stats: scale_statistics(&eps).ok(),
            frames,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
