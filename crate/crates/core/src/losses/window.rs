use nalgebra::Vector6;

use super::pair::{evaluate_pair, PairInput, PairLoss};
use super::smooth::smoothness_loss;
use super::{LossBundle, LossOptions};
use crate::depthfield::{DepthField, DepthMap};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, Twist};
use crate::image::Image;

/// A run of consecutive frames and the pose of each adjacent pair.
///
/// `poses[i]` maps points in camera `i` to camera `i + 1`; it is the pose
/// used when frame `i` is the target and frame `i + 1` the source.
#[derive(Debug, Clone)]
pub struct WindowView<'a> {
    pub intrinsics: &'a CameraIntrinsics,
    pub images: Vec<&'a Image>,
    pub poses: Vec<Pose>,
}

impl WindowView<'_> {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.images.len() < 2 || self.poses.len() + 1 != self.images.len() {
            return Err(Error::Shape(format!(
                "window of {} frames needs {} poses, got {}",
                self.images.len(),
                self.images.len().saturating_sub(1),
                self.poses.len()
            )));
        }
        Ok(())
    }
}

/// Where the depths used by a window loss come from.
#[derive(Debug, Clone, Copy)]
pub enum DepthSource<'a> {
    /// Held fixed; no depth gradient is produced.
    Fixed(&'a [DepthMap]),
    /// Free per-pixel depths; gradients are per pixel.
    Dense(&'a [DepthMap]),
    /// Learned depth fields; gradients are per coarse parameter.
    Learned(&'a [DepthField]),
}

impl DepthSource<'_> {
    fn len(&self) -> usize {
        match self {
            DepthSource::Fixed(m) | DepthSource::Dense(m) => m.len(),
            DepthSource::Learned(f) => f.len(),
        }
    }

    fn maps(&self) -> std::borrow::Cow<'_, [DepthMap]> {
        match self {
            DepthSource::Fixed(m) | DepthSource::Dense(m) => std::borrow::Cow::Borrowed(m),
            DepthSource::Learned(f) => std::borrow::Cow::Owned(f.iter().map(DepthField::eval_depth).collect()),
        }
    }

    fn wants_gradient(&self) -> bool {
        !matches!(self, DepthSource::Fixed(_))
    }

    /// Maps per-pixel depth gradients to this source's variables.
    fn finish(&self, per_pixel: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        match self {
            DepthSource::Fixed(_) => Vec::new(),
            DepthSource::Dense(_) => per_pixel,
            DepthSource::Learned(f) => f.iter().zip(&per_pixel).map(|(f, g)| f.backprop_depth(g)).collect(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Backward,
}

/// Sum of pair losses in one direction, still per pixel in depth.
struct DirectionalLoss {
    value: f64,
    grad_pose: Vec<Vector6<f64>>,
    grad_depth: Vec<Vec<f64>>,
    valid_fraction: f64,
    degenerate: Vec<usize>,
}

fn directional(
    window: &WindowView,
    maps: &[DepthMap],
    opts: &LossOptions,
    dir: Direction,
    want_depth: bool,
) -> Result<DirectionalLoss> {
    window.check()?;
    if maps.len() != window.len() {
        return Err(Error::Shape(format!("{} depth maps for {} frames", maps.len(), window.len())));
    }
    let n_pairs = window.poses.len();
    let w = &opts.weights;
    let mut value_sum = 0.0;
    let mut fraction_sum = 0.0;
    let mut grad_pose = vec![Vector6::zeros(); n_pairs];
    let mut grad_depth: Vec<Vec<f64>> = if want_depth {
        maps.iter().map(|m| vec![0.0; m.data.len()]).collect()
    } else {
        Vec::new()
    };
    let mut degenerate = Vec::new();
    let mut good: Vec<(usize, usize, usize, PairLoss, Option<Pose>)> = Vec::with_capacity(n_pairs);

    for i in 0..n_pairs {
        let (t, s, pose, inverse_of) = match dir {
            Direction::Forward => (i, i + 1, window.poses[i], None),
            Direction::Backward => {
                let inv = window.poses[i].inverse();
                (i + 1, i, inv, Some(inv))
            }
        };
        let input = PairInput {
            target: window.images[t],
            source: window.images[s],
            target_depth: &maps[t],
            source_depth: &maps[s],
            pose: &pose,
            intrinsics: window.intrinsics,
        };
        let p = evaluate_pair(&input, w);
        fraction_sum += p.valid_fraction;
        if p.valid_fraction < opts.min_valid_fraction || p.valid_fraction == 0.0 {
            degenerate.push(i);
            continue;
        }
        good.push((i, t, s, p, inverse_of));
    }
    if good.is_empty() {
        return Err(Error::DegenerateWindow);
    }
    let renorm = n_pairs as f64 / good.len() as f64;
    for (i, t, s, p, inverse_of) in good {
        value_sum += w.photometric * p.photometric + w.geometric * p.geometric;
        let g = (p.grad_pose_photometric * w.photometric + p.grad_pose_geometric * w.geometric) * renorm;
        grad_pose[i] += match inverse_of {
            None => g,
            // The pair used W = T⁻¹; exp(δ)T ⇒ W' = exp(−Ad_W δ) W.
            Some(wpose) => -(wpose.adjoint().transpose() * g),
        };
        if want_depth {
            let gt = &mut grad_depth[t];
            for (q, x) in gt.iter_mut().enumerate() {
                *x += renorm
                    * (w.photometric * p.grad_target_depth_photometric[q] + w.geometric * p.grad_target_depth_geometric[q]);
            }
            let gs = &mut grad_depth[s];
            for (q, x) in gs.iter_mut().enumerate() {
                *x += renorm * w.geometric * p.grad_source_depth_geometric[q];
            }
        }
    }
    Ok(DirectionalLoss {
        value: value_sum * renorm,
        grad_pose,
        grad_depth,
        valid_fraction: fraction_sum / n_pairs as f64,
        degenerate,
    })
}

fn bundle(d: DirectionalLoss, depths: &DepthSource) -> LossBundle {
    LossBundle {
        value: d.value,
        grad_pose: d.grad_pose.into_iter().map(Twist).collect(),
        grad_depth: depths.finish(d.grad_depth),
        valid_fraction: d.valid_fraction,
        degenerate_pairs: d.degenerate,
    }
}

fn check_source(window: &WindowView, depths: &DepthSource) -> Result<()> {
    if depths.len() != window.len() {
        return Err(Error::Shape(format!("{} depth entries for {} frames", depths.len(), window.len())));
    }
    Ok(())
}

/// `λ3·Σ L_pho + λ4·Σ L_GC` over pairs (i → i+1).
///
/// Degenerate pairs (valid fraction below the threshold) are dropped and the
/// remainder rescaled by `n_pairs / n_kept`.
pub fn forward_window_loss(window: &WindowView, depths: DepthSource, opts: &LossOptions) -> Result<LossBundle> {
    check_source(window, &depths)?;
    let maps = depths.maps();
    let d = directional(window, &maps, opts, Direction::Forward, depths.wants_gradient())?;
    Ok(bundle(d, &depths))
}

/// Same as [`forward_window_loss`] with each pair's target and source swapped
/// and its pose inverted. Pose gradients are still w.r.t. the forward poses.
pub fn backward_window_loss(window: &WindowView, depths: DepthSource, opts: &LossOptions) -> Result<LossBundle> {
    check_source(window, &depths)?;
    let maps = depths.maps();
    let d = directional(window, &maps, opts, Direction::Backward, depths.wants_gradient())?;
    Ok(bundle(d, &depths))
}

/// `λ5·(forward + backward) + λ6·Σ smoothness` over the window.
pub fn refine_loss(window: &WindowView, depths: DepthSource, opts: &LossOptions) -> Result<LossBundle> {
    check_source(window, &depths)?;
    let maps = depths.maps();
    let want = depths.wants_gradient();
    let f = directional(window, &maps, opts, Direction::Forward, want)?;
    let b = directional(window, &maps, opts, Direction::Backward, want)?;
    let w = &opts.weights;
    let mut value = w.bidirectional * (f.value + b.value);
    let grad_pose: Vec<Vector6<f64>> = f
        .grad_pose
        .iter()
        .zip(&b.grad_pose)
        .map(|(x, y)| (x + y) * w.bidirectional)
        .collect();
    let mut grad_depth: Vec<Vec<f64>> = Vec::new();
    if want {
        grad_depth = f
            .grad_depth
            .iter()
            .zip(&b.grad_depth)
            .map(|(x, y)| x.iter().zip(y).map(|(a, b)| w.bidirectional * (a + b)).collect())
            .collect();
    }
    if w.smoothness != 0.0 {
        for (i, (map, img)) in maps.iter().zip(&window.images).enumerate() {
            let (l, g) = smoothness_loss(map, img, opts.smoothness);
            value += w.smoothness * l;
            if want {
                for (x, gi) in grad_depth[i].iter_mut().zip(g) {
                    *x += w.smoothness * gi;
                }
            }
        }
    }
    let mut degenerate = f.degenerate;
    degenerate.extend(b.degenerate);
    degenerate.sort_unstable();
    degenerate.dedup();
    Ok(LossBundle {
        value,
        grad_pose: grad_pose.into_iter().map(Twist).collect(),
        grad_depth: depths.finish(grad_depth),
        valid_fraction: 0.5 * (f.valid_fraction + b.valid_fraction),
        degenerate_pairs: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossWeights;
    use crate::synth::{generate, SceneSpec, SyntheticSequence};

    fn scene(frames: usize) -> SyntheticSequence {
        let spec = SceneSpec {
            width: 48,
            height: 24,
            focal: 30.0,
            frames,
            seed: 11,
            ..SceneSpec::default()
        };
        generate(&spec).unwrap()
    }

    /// Ground-truth poses nudged so the losses are not at their minimum.
    fn perturbed_poses(seq: &SyntheticSequence) -> Vec<Pose> {
        (0..seq.frames.len() - 1)
            .map(|i| {
                let d = Twist::from_array([0.01, -0.005, 0.02, 0.002, -0.001, 0.0015]);
                crate::geometry::se3_exp(&d).compose(&seq.pair_pose(i))
            })
            .collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn two_frame_window_is_one_pair() {
        let seq = scene(2);
        let poses = perturbed_poses(&seq);
        let opts = LossOptions::default();
        let depths: Vec<DepthMap> = seq.frames.iter().map(|f| f.depth.clone()).collect();
        let view = WindowView {
            intrinsics: &seq.intrinsics,
            images: seq.frames.iter().map(|f| &f.image).collect(),
            poses: poses.clone(),
        };
        let w = forward_window_loss(&view, DepthSource::Dense(&depths), &opts).unwrap();
        let input = PairInput {
            target: &seq.frames[0].image,
            source: &seq.frames[1].image,
            target_depth: &depths[0],
            source_depth: &depths[1],
            pose: &poses[0],
            intrinsics: &seq.intrinsics,
        };
        let p = evaluate_pair(&input, &opts.weights);
        let expected = opts.weights.photometric * p.photometric + opts.weights.geometric * p.geometric;
        assert!(close(w.value, expected), "{} vs {expected}", w.value);
        let g = p.grad_pose_photometric * opts.weights.photometric + p.grad_pose_geometric * opts.weights.geometric;
        assert!((w.grad_pose[0].0 - g).norm() <= 1e-12 * g.norm());
    }

    #[test]
    fn window_is_the_sum_of_its_pairs() {
        let seq = scene(4);
        let poses = perturbed_poses(&seq);
        let opts = LossOptions::default();
        let depths: Vec<DepthMap> = seq.frames.iter().map(|f| f.depth.clone()).collect();
        let view = WindowView {
            intrinsics: &seq.intrinsics,
            images: seq.frames.iter().map(|f| &f.image).collect(),
            poses: poses.clone(),
        };
        let w = forward_window_loss(&view, DepthSource::Fixed(&depths), &opts).unwrap();
        let mut brute = 0.0;
        for i in 0..3 {
            let input = PairInput {
                target: &seq.frames[i].image,
                source: &seq.frames[i + 1].image,
                target_depth: &depths[i],
                source_depth: &depths[i + 1],
                pose: &poses[i],
                intrinsics: &seq.intrinsics,
            };
            let p = evaluate_pair(&input, &opts.weights);
            brute += opts.weights.photometric * p.photometric + opts.weights.geometric * p.geometric;
        }
        assert!(close(w.value, brute), "{} vs {brute}", w.value);
        assert!(w.grad_depth.is_empty());
    }

    #[test]
    fn backward_is_forward_on_the_reversed_window() {
        let seq = scene(4);
        let poses = perturbed_poses(&seq);
        let opts = LossOptions::default();
        let depths: Vec<DepthMap> = seq.frames.iter().map(|f| f.depth.clone()).collect();
        let view = WindowView {
            intrinsics: &seq.intrinsics,
            images: seq.frames.iter().map(|f| &f.image).collect(),
            poses: poses.clone(),
        };
        let back = backward_window_loss(&view, DepthSource::Dense(&depths), &opts).unwrap();

        let rev_depths: Vec<DepthMap> = depths.iter().rev().cloned().collect();
        let rev = WindowView {
            intrinsics: &seq.intrinsics,
            images: seq.frames.iter().rev().map(|f| &f.image).collect(),
            poses: poses.iter().rev().map(Pose::inverse).collect(),
        };
        let fwd = forward_window_loss(&rev, DepthSource::Dense(&rev_depths), &opts).unwrap();
        assert!(close(back.value, fwd.value), "{} vs {}", back.value, fwd.value);
        for (a, b) in back.grad_depth.iter().zip(fwd.grad_depth.iter().rev()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-9));
            }
        }
        // Reversed pair j carries W = T⁻¹ of forward pair n-2-j.
        for (j, g_rev) in fwd.grad_pose.iter().enumerate() {
            let i = poses.len() - 1 - j;
            let w = poses[i].inverse();
            let expected = -(w.adjoint().transpose() * g_rev.0);
            assert!((back.grad_pose[i].0 - expected).norm() <= 1e-10 * expected.norm().max(1e-12));
        }
    }

    #[test]
    fn refine_without_smoothness_is_both_directions() {
        let seq = scene(3);
        let poses = perturbed_poses(&seq);
        let opts = LossOptions {
            weights: LossWeights {
                smoothness: 0.0,
                bidirectional: 0.7,
                ..LossWeights::default()
            },
            ..LossOptions::default()
        };
        let depths: Vec<DepthMap> = seq.frames.iter().map(|f| f.depth.clone()).collect();
        let view = WindowView {
            intrinsics: &seq.intrinsics,
            images: seq.frames.iter().map(|f| &f.image).collect(),
            poses,
        };
        let r = refine_loss(&view, DepthSource::Dense(&depths), &opts).unwrap();
        let f = forward_window_loss(&view, DepthSource::Dense(&depths), &opts).unwrap();
        let b = backward_window_loss(&view, DepthSource::Dense(&depths), &opts).unwrap();
        assert!(close(r.value, 0.7 * (f.value + b.value)));
        for k in 0..2 {
            let expected = (f.grad_pose[k].0 + b.grad_pose[k].0) * 0.7;
            assert!((r.grad_pose[k].0 - expected).norm() <= 1e-12 * expected.norm());
        }
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let seq = scene(3);
        let depths: Vec<DepthMap> = seq.frames.iter().map(|f| f.depth.clone()).collect();
        let view = WindowView {
            intrinsics: &seq.intrinsics,
            images: seq.frames.iter().map(|f| &f.image).collect(),
            poses: vec![Pose::identity()],
        };
        let opts = LossOptions::default();
        assert!(forward_window_loss(&view, DepthSource::Fixed(&depths), &opts).is_err());
        let view = WindowView {
            poses: vec![Pose::identity(); 2],
            ..view
        };
        assert!(refine_loss(&view, DepthSource::Fixed(&depths[..2]), &opts).is_err());
    }
}
