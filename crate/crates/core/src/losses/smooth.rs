use serde::{Deserialize, Serialize};

use crate::depthfield::DepthMap;
use crate::image::Image;
use crate::numeric::tree_sum;

/// Which edge-aware smoothness penalty to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothnessForm {
    /// Mean over forward differences of `(e^{-|∂I|} · ∂(D / mean D))²`.
    #[default]
    EdgeAwareGradient,
    /// Mean over pixels of `½[(e^{-|∂ₓI|}·D)² + (e^{-|∂ᵧI|}·D)²]`, penalising
    /// depth values rather than their variation.
    Literal,
}

/// Mean absolute intensity difference over channels between two pixels.
fn intensity_step(img: &Image, a: usize, b: usize) -> f64 {
    let ch = img.channels;
    let mut s = 0.0;
    for c in 0..ch {
        s += (img.data[b * ch + c] - img.data[a * ch + c]).abs();
    }
    s / ch as f64
}

/// Smoothness loss of one frame and its gradient w.r.t. each depth pixel.
pub fn smoothness_loss(depth: &DepthMap, image: &Image, form: SmoothnessForm) -> (f64, Vec<f64>) {
    assert_eq!((depth.width, depth.height), (image.width, image.height), "smoothness: shape mismatch");
    match form {
        SmoothnessForm::EdgeAwareGradient => edge_aware_gradient(depth, image),
        SmoothnessForm::Literal => literal(depth, image),
    }
}

fn edge_aware_gradient(depth: &DepthMap, image: &Image) -> (f64, Vec<f64>) {
    let (w, h) = (depth.width, depth.height);
    let n = w * h;
    let mean = tree_sum(&depth.data) / n as f64;
    let count = (w - 1) * h + w * (h - 1);
    if count == 0 {
        return (0.0, vec![0.0; n]);
    }
    let inv_count = 1.0 / count as f64;
    let inv_mean = 1.0 / mean;
    let mut terms = Vec::with_capacity(count);
    // Gradient w.r.t. the normalised depth D̃ = D / mean.
    let mut g_norm = vec![0.0; n];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let mut add = |j: usize| {
                let wgt = (-intensity_step(image, i, j)).exp();
                let diff = (depth.data[j] - depth.data[i]) * inv_mean;
                let t = wgt * diff;
                terms.push(t * t);
                let g = 2.0 * t * wgt * inv_count;
                g_norm[j] += g;
                g_norm[i] -= g;
            };
            if u + 1 < w {
                add(i + 1);
            }
            if v + 1 < h {
                add(i + w);
            }
        }
    }
    let value = tree_sum(&terms) * inv_count;
    // D̃_p = D_p / m,  m = ΣD / n  ⇒  dL/dD_q = g̃_q / m − Σ_p g̃_p D_p / (m² n)
    let cross: Vec<f64> = g_norm.iter().zip(&depth.data).map(|(g, d)| g * d).collect();
    let corr = tree_sum(&cross) * inv_mean * inv_mean / n as f64;
    let grad = g_norm.iter().map(|g| g * inv_mean - corr).collect();
    (value, grad)
}

fn literal(depth: &DepthMap, image: &Image) -> (f64, Vec<f64>) {
    let (w, h) = (depth.width, depth.height);
    let n = w * h;
    let inv_n = 1.0 / n as f64;
    let mut terms = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let wx = if u + 1 < w { (-intensity_step(image, i, i + 1)).exp() } else { 1.0 };
            let wy = if v + 1 < h { (-intensity_step(image, i, i + w)).exp() } else { 1.0 };
            let d = depth.data[i];
            let k = 0.5 * (wx * wx + wy * wy);
            terms[i] = k * d * d;
            grad[i] = 2.0 * k * d * inv_n;
        }
    }
    (tree_sum(&terms) * inv_n, grad)
}
