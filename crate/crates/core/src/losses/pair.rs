use nalgebra::{Vector3, Vector6};

use super::ssim::{ssim, ssim_backward};
use super::synthesize::{sample, warp_field, Synthesis, ValidityMask, WarpField};
use super::{LossBundle, LossWeights};
use crate::depthfield::DepthMap;
use crate::geometry::{CameraIntrinsics, Pose, Twist};
use crate::image::{BilinearCell, Image};
use crate::numeric::{tree_sum, tree_sum_vec};

/// Masked scalar loss together with its gradient w.r.t. the per-pixel inputs.
#[derive(Debug, Clone)]
pub struct PixelLoss {
    pub value: f64,
    pub valid_fraction: f64,
    /// Photometric: dL/dÎ per pixel and channel. Geometric: dL/dD̂_s per pixel.
    pub grad_a: Vec<f64>,
    /// Geometric only: dL/dz per pixel.
    pub grad_b: Vec<f64>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Masked mean of `λ1·|I_t − Î| + λ2·(1 − SSIM)/2`, with dL/dÎ.
///
/// The L1 term is averaged over channels. Only valid pixels contribute to
/// the mean; for SSIM, invalid pixels of `synth` are replaced by the target.
pub fn photometric_loss(target: &Image, synth: &Image, mask: &ValidityMask, weights: &LossWeights) -> PixelLoss {
    assert!(target.same_shape(synth), "photometric_loss: shape mismatch");
    let n = target.num_pixels();
    let ch = target.channels;
    let n_valid = mask.count();
    if n_valid == 0 {
        return PixelLoss {
            value: 0.0,
            valid_fraction: 0.0,
            grad_a: vec![0.0; n * ch],
            grad_b: Vec::new(),
        };
    }
    // Invalid pixels take the target's values so SSIM windows straddling the
    // validity border compare like with like; they carry no gradient.
    let mut filled = synth.clone();
    for q in 0..n {
        if !mask.valid[q] {
            filled.data[q * ch..(q + 1) * ch].copy_from_slice(&target.data[q * ch..(q + 1) * ch]);
        }
    }
    let synth = &filled;
    let s = ssim(target, synth);
    let inv = 1.0 / n_valid as f64;
    let mut per_pixel = vec![0.0; n];
    let mut grad = vec![0.0; n * ch];
    let mut grad_ssim = vec![0.0; n];
    for q in 0..n {
        if !mask.valid[q] {
            continue;
        }
        let mut l1 = 0.0;
        for c in 0..ch {
            let r = synth.data[q * ch + c] - target.data[q * ch + c];
            l1 += r.abs();
            grad[q * ch + c] = weights.l1 * sign(r) * inv / ch as f64;
        }
        per_pixel[q] = weights.l1 * l1 / ch as f64 + weights.ssim * 0.5 * (1.0 - s[q]);
        grad_ssim[q] = -0.5 * weights.ssim * inv;
    }
    if weights.ssim != 0.0 {
        let gs = ssim_backward(target, synth, &grad_ssim);
        for (i, (g, x)) in grad.iter_mut().zip(gs).enumerate() {
            if mask.valid[i / ch] {
                *g += x;
            }
        }
    }
    PixelLoss {
        value: tree_sum(&per_pixel) * inv,
        valid_fraction: n_valid as f64 / n as f64,
        grad_a: grad,
        grad_b: Vec::new(),
    }
}

/// Masked mean of `|D̂_s − z| / (D̂_s + z)` with gradients w.r.t. both inputs.
pub fn gc_loss(interp_source: &[f64], z: &[f64], mask: &ValidityMask) -> PixelLoss {
    let n = z.len();
    let n_valid = mask.count();
    let mut per_pixel = vec![0.0; n];
    let mut ga = vec![0.0; n];
    let mut gb = vec![0.0; n];
    if n_valid == 0 {
        return PixelLoss {
            value: 0.0,
            valid_fraction: 0.0,
            grad_a: ga,
            grad_b: gb,
        };
    }
    let inv = 1.0 / n_valid as f64;
    for q in 0..n {
        if !mask.valid[q] {
            continue;
        }
        let (a, b) = (interp_source[q], z[q]);
        let sum = a + b;
        let diff = a - b;
        per_pixel[q] = diff.abs() / sum;
        let s = sign(diff);
        let sq = sum * sum;
        ga[q] = (s * sum - diff.abs()) / sq * inv;
        gb[q] = (-s * sum - diff.abs()) / sq * inv;
    }
    PixelLoss {
        value: tree_sum(&per_pixel) * inv,
        valid_fraction: n_valid as f64 / n as f64,
        grad_a: ga,
        grad_b: gb,
    }
}

/// One target/source pair.
#[derive(Debug, Clone, Copy)]
pub struct PairInput<'a> {
    pub target: &'a Image,
    pub source: &'a Image,
    pub target_depth: &'a DepthMap,
    pub source_depth: &'a DepthMap,
    /// Target camera → source camera.
    pub pose: &'a Pose,
    pub intrinsics: &'a CameraIntrinsics,
}

/// Both pair terms with gradients.
///
/// Pose gradients are w.r.t. a left perturbation `exp(δ)·T` of the pair pose.
#[derive(Debug, Clone)]
pub struct PairLoss {
    pub photometric: f64,
    pub geometric: f64,
    pub valid_fraction: f64,
    pub grad_pose_photometric: Vector6<f64>,
    pub grad_pose_geometric: Vector6<f64>,
    pub grad_target_depth_photometric: Vec<f64>,
    pub grad_target_depth_geometric: Vec<f64>,
    pub grad_source_depth_geometric: Vec<f64>,
}

/// Pushes per-pixel gradients w.r.t. warped coordinates and warped depth
/// back onto the left pose perturbation and the target depth.
fn chain(
    k: &CameraIntrinsics,
    warp: &WarpField,
    g_u: &[f64],
    g_v: &[f64],
    g_z: Option<&[f64]>,
) -> (Vector6<f64>, Vec<f64>) {
    let n = warp.valid.len();
    let mut per_pixel = vec![[0.0; 6]; n];
    let mut g_depth = vec![0.0; n];
    for q in 0..n {
        if !warp.valid[q] {
            continue;
        }
        let y = &warp.points[q];
        let iz = 1.0 / y.z;
        let (gu, gv) = (g_u[q], g_v[q]);
        let gz = g_z.map_or(0.0, |g| g[q]);
        let gy = Vector3::new(
            gu * k.fx * iz,
            gv * k.fy * iz,
            -(gu * k.fx * y.x + gv * k.fy * y.y) * iz * iz + gz,
        );
        let rot = y.cross(&gy);
        per_pixel[q] = [gy.x, gy.y, gy.z, rot.x, rot.y, rot.z];
        g_depth[q] = gy.dot(&warp.depth_dir[q]);
    }
    let s = tree_sum_vec(&per_pixel);
    (Vector6::from_column_slice(&s), g_depth)
}

pub fn evaluate_pair(input: &PairInput, weights: &LossWeights) -> PairLoss {
    let k = input.intrinsics;
    let n = input.target.num_pixels();
    let ch = input.target.channels;
    let warp = warp_field(k, input.target_depth, input.pose);
    let sampled = sample(input.source, &warp);
    let mask = ValidityMask {
        width: warp.width,
        height: warp.height,
        valid: warp.valid.clone(),
    };

    // Photometric term.
    let pho = photometric_loss(input.target, &sampled.image, &mask, weights);
    let mut gu = vec![0.0; n];
    let mut gv = vec![0.0; n];
    for q in 0..n {
        if !mask.valid[q] {
            continue;
        }
        for c in 0..ch {
            let g = pho.grad_a[q * ch + c];
            gu[q] += g * sampled.du[q * ch + c];
            gv[q] += g * sampled.dv[q * ch + c];
        }
    }
    let (gp_pho, gd_pho) = chain(k, &warp, &gu, &gv, None);

    // Geometric-consistency term.
    let src = input.source_depth;
    let mut interp = vec![0.0; n];
    let mut dsu = vec![0.0; n];
    let mut dsv = vec![0.0; n];
    let mut cells = Vec::with_capacity(n);
    for q in 0..n {
        if !mask.valid[q] {
            cells.push(None);
            continue;
        }
        let cell = BilinearCell::locate(warp.coords[q], src.width, src.height);
        let (val, du, dv) = cell.eval(src.width, |i| src.data[i]);
        interp[q] = val;
        dsu[q] = du;
        dsv[q] = dv;
        cells.push(Some(cell));
    }
    let z: Vec<f64> = warp.points.iter().map(|y| y.z).collect();
    let gc = gc_loss(&interp, &z, &mask);
    let mut gsrc = vec![0.0; src.data.len()];
    for q in 0..n {
        let Some(cell) = cells[q] else { continue };
        let ga = gc.grad_a[q];
        gu[q] = ga * dsu[q];
        gv[q] = ga * dsv[q];
        for (i, w) in cell.taps(src.width) {
            gsrc[i] += ga * w;
        }
    }
    for q in 0..n {
        if !mask.valid[q] {
            gu[q] = 0.0;
            gv[q] = 0.0;
        }
    }
    let (gp_gc, gd_gc) = chain(k, &warp, &gu, &gv, Some(&gc.grad_b));

    PairLoss {
        photometric: pho.value,
        geometric: gc.value,
        valid_fraction: mask.valid_fraction(),
        grad_pose_photometric: gp_pho,
        grad_pose_geometric: gp_gc,
        grad_target_depth_photometric: gd_pho,
        grad_target_depth_geometric: gd_gc,
        grad_source_depth_geometric: gsrc,
    }
}

fn pair_bundle(value: f64, valid: f64, pose: Vector6<f64>, target: Vec<f64>, source: Vec<f64>, min_valid: f64) -> LossBundle {
    LossBundle {
        value,
        grad_pose: vec![Twist(pose)],
        grad_depth: vec![target, source],
        valid_fraction: valid,
        degenerate_pairs: if valid < min_valid { vec![0] } else { Vec::new() },
    }
}

/// Photometric term of one pair, chained to pose and per-pixel target depth.
/// `grad_depth` holds [target, source] per-pixel gradients.
pub fn pair_photometric_loss(input: &PairInput, weights: &LossWeights, min_valid_fraction: f64) -> LossBundle {
    let p = evaluate_pair(input, weights);
    let zeros = vec![0.0; input.source_depth.data.len()];
    pair_bundle(
        p.photometric,
        p.valid_fraction,
        p.grad_pose_photometric,
        p.grad_target_depth_photometric,
        zeros,
        min_valid_fraction,
    )
}

/// Geometric-consistency term of one pair.
pub fn pair_gc_loss(input: &PairInput, min_valid_fraction: f64) -> LossBundle {
    let p = evaluate_pair(input, &LossWeights::default());
    pair_bundle(
        p.geometric,
        p.valid_fraction,
        p.grad_pose_geometric,
        p.grad_target_depth_geometric,
        p.grad_source_depth_geometric,
        min_valid_fraction,
    )
}

/// Convenience: synthesize and score against the target in one call.
pub fn photometric_from_synthesis(target: &Image, synth: &Synthesis, weights: &LossWeights) -> PixelLoss {
    photometric_loss(target, &synth.image, &synth.mask, weights)
}
