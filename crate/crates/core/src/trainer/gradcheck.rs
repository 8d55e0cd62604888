//! Central-difference verification of the analytic loss gradients.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::depthfield::{DepthField, DepthFieldConfig, DepthMap};
use crate::error::{Error, Result};
use crate::geometry::{se3_exp, warp_pixel, CameraIntrinsics, Pixel, Pose, Twist};
use crate::image::Image;
use crate::losses::{
    backward_window_loss, forward_window_loss, pair_gc_loss, pair_photometric_loss, refine_loss, smoothness_loss,
    DepthSource, LossBundle, LossOptions, PairInput, WindowView,
};
use crate::numeric::{median, relative_error};
use crate::synth::{generate, SceneSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSelector {
    /// Photometric term of the first pair (pose, target depth).
    Photometric,
    /// Geometric consistency term of the first pair (pose, both depths).
    Geometric,
    /// Smoothness of the first frame (depth).
    Smoothness,
    /// Forward window loss (poses, per-pixel depths).
    Forward,
    /// Backward window loss (poses, per-pixel depths).
    Backward,
    /// Refinement loss (poses, depth-field parameters).
    Refine,
}

impl LossSelector {
    pub const ALL: [LossSelector; 6] = [
        LossSelector::Photometric,
        LossSelector::Geometric,
        LossSelector::Smoothness,
        LossSelector::Forward,
        LossSelector::Backward,
        LossSelector::Refine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossSelector::Photometric => "photometric",
            LossSelector::Geometric => "geometric",
            LossSelector::Smoothness => "smoothness",
            LossSelector::Forward => "forward",
            LossSelector::Backward => "backward",
            LossSelector::Refine => "refine",
        }
    }
}

impl fmt::Display for LossSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossSelector::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckTolerance {
    /// Maximum relative error for a coordinate to pass.
    pub relative: f64,
    /// Fraction of checked coordinates that must pass.
    pub pass_fraction: f64,
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Depth coordinates sampled per check (all pose coordinates are checked).
    pub max_depth_coords: usize,
    pub seed: u64,
    /// Adds 1 to the analytic gradient of this coordinate (fault injection).
    pub corrupt: Option<usize>,
}

impl Default for GradCheckTolerance {
    fn default() -> Self {
        GradCheckTolerance {
            relative: 1e-3,
            pass_fraction: 0.99,
            step: 1e-6,
            floor: 1e-7,
            max_depth_coords: 150,
            seed: 0,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub coordinate: String,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub loss: String,
    pub checked: usize,
    pub passed: usize,
    pub max_relative_error: f64,
    pub median_relative_error: f64,
    pub offending: Vec<Offender>,
    pub pass: bool,
}

/// Compares `analytic[i]` with a central difference of `f` for every `i` in
/// `coords`. `f(i, h)` evaluates the function with coordinate `i` moved by
/// `h`.
pub fn check_gradient(
    name: &str,
    mut f: impl FnMut(usize, f64) -> Result<f64>,
    analytic: &[f64],
    coords: &[usize],
    labels: impl Fn(usize) -> String,
    tol: &GradCheckTolerance,
) -> Result<GradCheckReport> {
    let mut errors = Vec::with_capacity(coords.len());
    let mut offending = Vec::new();
    for &i in coords {
        let numeric = (f(i, tol.step)? - f(i, -tol.step)?) / (2.0 * tol.step);
        let mut a = analytic[i];
        if tol.corrupt == Some(i) {
            a += 1.0;
        }
        let rel = relative_error(a, numeric, tol.floor);
        errors.push(rel);
        if !(rel < tol.relative) {
            offending.push(Offender {
                coordinate: labels(i),
                analytic: a,
                numeric,
                relative_error: rel,
            });
        }
    }
    let checked = errors.len();
    let passed = checked - offending.len();
    Ok(GradCheckReport {
        loss: name.to_string(),
        checked,
        passed,
        max_relative_error: errors.iter().copied().fold(0.0, f64::max),
        median_relative_error: if errors.is_empty() { 0.0 } else { median(&errors) },
        pass: checked > 0 && passed as f64 >= tol.pass_fraction * checked as f64,
        offending,
    })
}

/// A small multi-frame problem with perturbed poses and depths so that every
/// loss has non-trivial gradients.
#[derive(Debug, Clone)]
pub struct GradCheckInstance {
    pub intrinsics: CameraIntrinsics,
    pub images: Vec<Image>,
    pub depths: Vec<DepthMap>,
    pub poses: Vec<Pose>,
    pub fields: Vec<DepthField>,
    pub options: LossOptions,
}

impl GradCheckInstance {
    /// A `frames`-frame synthetic window at `width × height` (16 to 64).
    pub fn synthetic(width: usize, height: usize, frames: usize, seed: u64) -> Result<Self> {
        let mut spec = SceneSpec {
            width,
            height,
            focal: 0.6 * width as f64,
            frames,
            seed,
            ..SceneSpec::default()
        }
        .noiseless();
        spec.texture.min_wavelength = 1.0;
        spec.texture.max_wavelength = 3.0;
        let seq = generate(&spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let poses = seq
            .pair_poses()
            .iter()
            .map(|p| {
                let mut xi = [0.0; 6];
                for (j, x) in xi.iter_mut().enumerate() {
                    *x = rng.random_range(-1.0..1.0) * if j < 3 { 0.02 } else { 0.003 };
                }
                se3_exp(&Twist::from_array(xi)).compose(p)
            })
            .collect();
        let depths: Vec<DepthMap> = seq
            .frames
            .iter()
            .map(|f| {
                let (a, b) = (rng.random_range(0.3..0.9), rng.random_range(0.2..0.7));
                DepthMap::from_fn(width, height, |u, v| {
                    f.depth.get(u, v) * (1.0 + 0.05 * (a * u as f64).sin() * (b * v as f64).cos())
                })
            })
            .collect();
        let cfg = DepthFieldConfig {
            stride: 4,
            ..DepthFieldConfig::default()
        };
        let fields = depths
            .iter()
            .map(|d| DepthField::fit(d, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(GradCheckInstance {
            intrinsics: seq.intrinsics,
            images: seq.frames.into_iter().map(|f| f.image).collect(),
            depths,
            poses,
            fields,
            options: LossOptions {
                min_valid_fraction: 0.0,
                ..LossOptions::default()
            },
        })
    }

    fn pair<'a>(&'a self, depths: &'a [DepthMap], pose: &'a Pose) -> PairInput<'a> {
        PairInput {
            target: &self.images[0],
            source: &self.images[1],
            target_depth: &depths[0],
            source_depth: &depths[1],
            pose,
            intrinsics: &self.intrinsics,
        }
    }

    fn evaluate(&self, sel: LossSelector, poses: &[Pose], depths: &[DepthMap], fields: &[DepthField]) -> Result<LossBundle> {
        let opts = &self.options;
        let view = || WindowView {
            intrinsics: &self.intrinsics,
            images: self.images.iter().collect(),
            poses: poses.to_vec(),
        };
        match sel {
            LossSelector::Photometric => Ok(pair_photometric_loss(&self.pair(depths, &poses[0]), &opts.weights, 0.0)),
            LossSelector::Geometric => Ok(pair_gc_loss(&self.pair(depths, &poses[0]), 0.0)),
            LossSelector::Smoothness => {
                let (value, g) = smoothness_loss(&depths[0], &self.images[0], opts.smoothness);
                Ok(LossBundle {
                    value,
                    grad_pose: Vec::new(),
                    grad_depth: vec![g],
                    valid_fraction: 1.0,
                    degenerate_pairs: Vec::new(),
                })
            }
            LossSelector::Forward => forward_window_loss(&view(), DepthSource::Dense(depths), opts),
            LossSelector::Backward => backward_window_loss(&view(), DepthSource::Dense(depths), opts),
            LossSelector::Refine => refine_loss(&view(), DepthSource::Learned(fields), opts),
        }
    }

    /// Whether depth pixel `q` of frame `frame` warps close to a bilinear
    /// cell boundary under the first pair's pose (or its inverse).
    fn near_cell_boundary(&self, frame: usize, q: usize) -> bool {
        let w = self.intrinsics.width;
        let p = Pixel::new((q % w) as f64, (q / w) as f64);
        let pose = if frame == 0 { self.poses[0] } else { self.poses[frame - 1].inverse() };
        let warp = warp_pixel(p, self.depths[frame].data[q], &self.intrinsics, &pose);
        let frac = |x: f64| (x - x.round()).abs();
        frac(warp.pixel.u) < 1e-3 || frac(warp.pixel.v) < 1e-3
    }
}

enum Coord {
    Pose { pair: usize, k: usize },
    Depth { frame: usize, index: usize },
}

/// Central-difference check of one loss on `instance`.
pub fn gradient_check(sel: LossSelector, instance: &GradCheckInstance, tol: &GradCheckTolerance) -> Result<GradCheckReport> {
    let base = instance.evaluate(sel, &instance.poses, &instance.depths, &instance.fields)?;
    let learned = sel == LossSelector::Refine;
    let uses_pose = sel != LossSelector::Smoothness;
    let n_pairs = match sel {
        LossSelector::Photometric | LossSelector::Geometric => 1,
        LossSelector::Smoothness => 0,
        _ => instance.poses.len(),
    };

    let mut coords = Vec::new();
    let mut analytic = Vec::new();
    if uses_pose {
        for pair in 0..n_pairs {
            for k in 0..6 {
                coords.push(Coord::Pose { pair, k });
                analytic.push(base.grad_pose[pair].0[k]);
            }
        }
    }
    let n_pose = coords.len();
    let frames: Vec<usize> = match sel {
        LossSelector::Photometric | LossSelector::Smoothness => vec![0],
        LossSelector::Geometric => vec![0, 1],
        _ => (0..instance.images.len()).collect(),
    };
    for &frame in &frames {
        for (index, &g) in base.grad_depth[frame].iter().enumerate() {
            coords.push(Coord::Depth { frame, index });
            analytic.push(g);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tol.seed);
    let n_depth = coords.len() - n_pose;
    let mut chosen: Vec<usize> = (0..n_pose).collect();
    let mut picked: Vec<usize> = sample(&mut rng, n_depth, tol.max_depth_coords.min(n_depth))
        .into_iter()
        .map(|i| n_pose + i)
        .filter(|&i| match coords[i] {
            // Field parameters move many pixels at once, like poses.
            Coord::Depth { frame, index } => learned || sel == LossSelector::Smoothness || !instance.near_cell_boundary(frame, index),
            Coord::Pose { .. } => true,
        })
        .collect();
    picked.sort_unstable();
    chosen.extend(picked);

    let eval_at = |i: usize, h: f64| -> Result<f64> {
        let mut poses = instance.poses.clone();
        let mut depths = instance.depths.clone();
        let mut fields = instance.fields.clone();
        match coords[i] {
            Coord::Pose { pair, k } => {
                let mut xi = [0.0; 6];
                xi[k] = h;
                poses[pair] = se3_exp(&Twist::from_array(xi)).compose(&poses[pair]);
            }
            Coord::Depth { frame, index } if learned => fields[frame].params[index] += h,
            Coord::Depth { frame, index } => depths[frame].data[index] += h,
        }
        Ok(instance.evaluate(sel, &poses, &depths, &fields)?.value)
    };
    let label = |i: usize| match coords[i] {
        Coord::Pose { pair, k } => format!("pose[{pair}][{k}]"),
        Coord::Depth { frame, index } if learned => format!("field[{frame}][{index}]"),
        Coord::Depth { frame, index } => format!("depth[{frame}][{index}]"),
    };
    check_gradient(sel.name(), eval_at, &analytic, &chosen, label, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn photometric_passes_on_small_pair() {
        let inst = GradCheckInstance::synthetic(16, 16, 2, 1).unwrap();
        let r = gradient_check(LossSelector::Photometric, &inst, &GradCheckTolerance::default()).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_is_reported() {
        let inst = GradCheckInstance::synthetic(16, 16, 2, 1).unwrap();
        let tol = GradCheckTolerance {
            corrupt: Some(2),
            pass_fraction: 1.0,
            ..GradCheckTolerance::default()
        };
        let r = gradient_check(LossSelector::Photometric, &inst, &tol).unwrap();
        assert!(!r.pass);
        assert_eq!(r.offending[0].coordinate, "pose[0][2]");
    }

    #[test]
    fn selector_names_round_trip() {
        for s in LossSelector::ALL {
            assert_eq!(s.name().parse::<LossSelector>().unwrap(), s);
        }
        assert!("nope".parse::<LossSelector>().is_err());
    }
}
