//! 3×3 box-window SSIM with its adjoint.
//!
//! Windows are truncated at the image border: a border pixel averages over
//! its in-bounds neighbours only.

use crate::image::Image;

pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Number of in-bounds pixels in each 3×3 window.
fn window_counts(w: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w * h);
    for v in 0..h {
        let ny = 1 + (v > 0) as usize + (v + 1 < h) as usize;
        for u in 0..w {
            let nx = 1 + (u > 0) as usize + (u + 1 < w) as usize;
            out.push((nx * ny) as f64);
        }
    }
    out
}

/// Sum over each pixel's in-bounds 3×3 neighbourhood (separable).
fn box_sum(w: usize, h: usize, x: &[f64]) -> Vec<f64> {
    let mut rows = vec![0.0; w * h];
    for v in 0..h {
        let r = &x[v * w..(v + 1) * w];
        for u in 0..w {
            let mut s = r[u];
            if u > 0 {
                s += r[u - 1];
            }
            if u + 1 < w {
                s += r[u + 1];
            }
            rows[v * w + u] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut s = rows[v * w + u];
            if v > 0 {
                s += rows[(v - 1) * w + u];
            }
            if v + 1 < h {
                s += rows[(v + 1) * w + u];
            }
            out[v * w + u] = s;
        }
    }
    out
}

struct ChannelStats {
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    var_a: Vec<f64>,
    var_b: Vec<f64>,
    cov: Vec<f64>,
}

fn channel(img: &Image, c: usize) -> Vec<f64> {
    (0..img.num_pixels()).map(|i| img.data[i * img.channels + c]).collect()
}

fn stats(a: &[f64], b: &[f64], w: usize, h: usize, counts: &[f64]) -> ChannelStats {
    let mean = |x: Vec<f64>| -> Vec<f64> {
        box_sum(w, h, &x).into_iter().zip(counts).map(|(s, n)| s / n).collect()
    };
    let mu_a = mean(a.to_vec());
    let mu_b = mean(b.to_vec());
    let ea2 = mean(a.iter().map(|x| x * x).collect());
    let eb2 = mean(b.iter().map(|x| x * x).collect());
    let eab = mean(a.iter().zip(b).map(|(x, y)| x * y).collect());
    let n = w * h;
    let mut var_a = vec![0.0; n];
    let mut var_b = vec![0.0; n];
    let mut cov = vec![0.0; n];
    for i in 0..n {
        var_a[i] = ea2[i] - mu_a[i] * mu_a[i];
        var_b[i] = eb2[i] - mu_b[i] * mu_b[i];
        cov[i] = eab[i] - mu_a[i] * mu_b[i];
    }
    ChannelStats {
        mu_a,
        mu_b,
        var_a,
        var_b,
        cov,
    }
}

#[inline]
fn ssim_terms(s: &ChannelStats, i: usize) -> (f64, f64, f64, f64) {
    let n1 = 2.0 * s.mu_a[i] * s.mu_b[i] + C1;
    let n2 = 2.0 * s.cov[i] + C2;
    let d1 = s.mu_a[i] * s.mu_a[i] + s.mu_b[i] * s.mu_b[i] + C1;
    let d2 = s.var_a[i] + s.var_b[i] + C2;
    (n1, n2, d1, d2)
}

/// Per-pixel SSIM averaged over channels.
pub fn ssim(a: &Image, b: &Image) -> Vec<f64> {
    assert!(a.same_shape(b), "ssim: image shapes differ");
    let (w, h, ch) = (a.width, a.height, a.channels);
    let counts = window_counts(w, h);
    let mut out = vec![0.0; w * h];
    for c in 0..ch {
        let s = stats(&channel(a, c), &channel(b, c), w, h, &counts);
        for (i, o) in out.iter_mut().enumerate() {
            let (n1, n2, d1, d2) = ssim_terms(&s, i);
            *o += n1 * n2 / (d1 * d2) / ch as f64;
        }
    }
    out
}

/// Given dL/dSSIM per pixel, returns dL/db per pixel and channel.
pub(crate) fn ssim_backward(a: &Image, b: &Image, grad_ssim: &[f64]) -> Vec<f64> {
    let (w, h, ch) = (a.width, a.height, a.channels);
    let n = w * h;
    let counts = window_counts(w, h);
    let mut out = vec![0.0; n * ch];
    for c in 0..ch {
        let ac = channel(a, c);
        let bc = channel(b, c);
        let s = stats(&ac, &bc, w, h, &counts);
        let mut g_mu = vec![0.0; n];
        let mut g_eb2 = vec![0.0; n];
        let mut g_eab = vec![0.0; n];
        for i in 0..n {
            let g = grad_ssim[i] / ch as f64;
            if g == 0.0 {
                continue;
            }
            let (n1, n2, d1, d2) = ssim_terms(&s, i);
            let (ma, mb) = (s.mu_a[i], s.mu_b[i]);
            let den = d1 * d2;
            let val = n1 * n2 / den;
            // Derivatives of S = N1·N2 / (D1·D2) w.r.t. μ_b, E[b²], E[ab],
            // with σ_b² = E[b²] − μ_b² and σ_ab = E[ab] − μ_a μ_b.
            let dnum_dmu = 2.0 * ma * n2 - 2.0 * ma * n1;
            let dden_dmu = 2.0 * mb * d2 - 2.0 * mb * d1;
            let ds_dmu = (dnum_dmu - val * dden_dmu) / den;
            let ds_deb2 = -val * d1 / den;
            let ds_deab = 2.0 * n1 / den;
            let inv = g / counts[i];
            g_mu[i] = ds_dmu * inv;
            g_eb2[i] = ds_deb2 * inv;
            g_eab[i] = ds_deab * inv;
        }
        let a_mu = box_sum(w, h, &g_mu);
        let a_eb2 = box_sum(w, h, &g_eb2);
        let a_eab = box_sum(w, h, &g_eab);
        for q in 0..n {
            out[q * ch + c] = a_mu[q] + 2.0 * bc[q] * a_eb2[q] + ac[q] * a_eab[q];
        }
    }
    out
}
