use serde::{Deserialize, Serialize};

use crate::depthfield::{DepthMap, SparseDepthImage};
use crate::error::{Error, Result};
use crate::numeric::tree_sum;

/// Default maximum ground-truth depth considered (m).
pub const DEPTH_CAP: f64 = 80.0;

/// Thresholds of the δ accuracy metrics.
pub const DELTA_THRESHOLDS: [f64; 3] = [1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    /// Fraction of pixels with `max(D/D_v, D_v/D)` below each threshold.
    pub delta: [f64; 3],
    pub n_pixels: usize,
}

/// Metrics over LiDAR-covered pixels with `0 < D_v ≤ cap`.
pub fn depth_metrics(d: &DepthMap, d_v: &SparseDepthImage, cap: f64) -> Result<DepthMetrics> {
    if (d.width, d.height) != (d_v.width, d_v.height) {
        return Err(Error::Shape(format!(
            "prediction {}x{} vs ground truth {}x{}",
            d.width, d.height, d_v.width, d_v.height
        )));
    }
    let idx: Vec<usize> = d_v
        .valid_indices()
        .filter(|&q| d_v.depth[q] > 0.0 && d_v.depth[q] <= cap)
        .collect();
    if idx.is_empty() {
        return Err(Error::Eval("no valid ground-truth pixels".into()));
    }
    let n = idx.len() as f64;
    let mut abs = Vec::with_capacity(idx.len());
    let mut sq = Vec::with_capacity(idx.len());
    let mut se = Vec::with_capacity(idx.len());
    let mut hits = [0usize; 3];
    for &q in &idx {
        let (p, g) = (d.data[q], d_v.depth[q]);
        let r = p - g;
        abs.push(r.abs() / g);
        sq.push(r * r / g);
        se.push(r * r);
        let ratio = (g / p).max(p / g);
        for (h, t) in hits.iter_mut().zip(DELTA_THRESHOLDS) {
            if ratio < t {
                *h += 1;
            }
        }
    }
    Ok(DepthMetrics {
        abs_rel: tree_sum(&abs) / n,
        sq_rel: tree_sum(&sq) / n,
        rmse: (tree_sum(&se) / n).sqrt(),
        delta: hits.map(|h| h as f64 / n),
        n_pixels: idx.len(),
    })
}

/// Per-frame metrics averaged over frames (each frame weighted equally).
pub fn mean_depth_metrics(frames: &[DepthMetrics]) -> Result<DepthMetrics> {
    if frames.is_empty() {
        return Err(Error::Eval("no depth frames to average".into()));
    }
    let n = frames.len() as f64;
    let avg = |f: &dyn Fn(&DepthMetrics) -> f64| tree_sum(&frames.iter().map(f).collect::<Vec<_>>()) / n;
    Ok(DepthMetrics {
        abs_rel: avg(&|m| m.abs_rel),
        sq_rel: avg(&|m| m.sq_rel),
        rmse: avg(&|m| m.rmse),
        delta: [avg(&|m| m.delta[0]), avg(&|m| m.delta[1]), avg(&|m| m.delta[2])],
        n_pixels: frames.iter().map(|m| m.n_pixels).sum(),
    })
}
