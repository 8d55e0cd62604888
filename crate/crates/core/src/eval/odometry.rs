use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};
use crate::numeric::tree_sum;

/// Default KITTI segment lengths (m).
pub const SEGMENT_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    #[default]
    None,
    /// One global scale on the estimated positions, chosen by least squares.
    ScaleOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentErrors {
    /// Translational drift, percent.
    pub t_rel: f64,
    /// Rotational drift, degrees per 100 m.
    pub r_rel: f64,
    pub segments: usize,
}

/// Cumulative path length along the trajectory.
pub fn path_distances(traj: &Trajectory) -> Vec<f64> {
    let mut d = Vec::with_capacity(traj.len());
    let mut acc = 0.0;
    d.push(0.0);
    for w in traj.poses.windows(2) {
        acc += (w[1].translation - w[0].translation).norm();
        d.push(acc);
    }
    d
}

/// KITTI relative errors averaged over every segment of every length.
///
/// Segments start at every frame; the end is the first frame whose distance
/// along the ground-truth path reaches the segment length.
pub fn kitti_segment_errors(est: &Trajectory, gt: &Trajectory, lengths: &[f64]) -> Result<SegmentErrors> {
    if est.len() != gt.len() {
        return Err(Error::Eval(format!("{} estimated poses for {} ground-truth poses", est.len(), gt.len())));
    }
    let dist = path_distances(gt);
    let mut t_errs = Vec::new();
    let mut r_errs = Vec::new();
    for i in 0..gt.len() {
        for &len in lengths {
            let Some(j) = (i..gt.len()).find(|&j| dist[j] >= dist[i] + len) else {
                continue;
            };
            let gt_rel = gt.poses[i].inverse().compose(&gt.poses[j]);
            let est_rel = est.poses[i].inverse().compose(&est.poses[j]);
            let e = gt_rel.inverse().compose(&est_rel);
            t_errs.push(e.translation.norm() / len);
            r_errs.push(e.angle() / len);
        }
    }
    if t_errs.is_empty() {
        let total = dist.last().copied().unwrap_or(0.0);
        let shortest = lengths.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(Error::Eval(format!(
            "ground-truth path of {total:.1} m is shorter than the shortest segment ({shortest} m)"
        )));
    }
    let n = t_errs.len() as f64;
    Ok(SegmentErrors {
        t_rel: 100.0 * tree_sum(&t_errs) / n,
        r_rel: 100.0 * tree_sum(&r_errs).to_degrees() / n,
        segments: t_errs.len(),
    })
}

/// Least-squares scale `s` minimizing `Σ‖s·x − x_gt‖²`.
pub fn optimal_scale(est: &[Vector3<f64>], gt: &[Vector3<f64>]) -> f64 {
    let num: Vec<f64> = est.iter().zip(gt).map(|(x, g)| x.dot(g)).collect();
    let den: Vec<f64> = est.iter().map(|x| x.norm_squared()).collect();
    let den = tree_sum(&den);
    if den == 0.0 {
        1.0
    } else {
        tree_sum(&num) / den
    }
}

/// Root mean squared position error, optionally after scale alignment.
/// Returns the RMSE and the scale that was applied.
pub fn ate_rmse(est: &Trajectory, gt: &Trajectory, alignment: Alignment) -> Result<(f64, f64)> {
    if est.len() != gt.len() || est.is_empty() {
        return Err(Error::Eval(format!("{} estimated poses for {} ground-truth poses", est.len(), gt.len())));
    }
    let x = est.positions();
    let y = gt.positions();
    let s = match alignment {
        Alignment::None => 1.0,
        Alignment::ScaleOnly => optimal_scale(&x, &y),
    };
    let sq: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (a * s - b).norm_squared()).collect();
    Ok(((tree_sum(&sq) / sq.len() as f64).sqrt(), s))
}

/// `Σ‖t_est‖ / Σ‖t_gt‖` over consecutive relative motions.
pub fn trajectory_scale_ratio(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    let steps = |t: &Trajectory| -> Vec<f64> { t.relative().iter().map(|p| p.translation.norm()).collect() };
    let g = tree_sum(&steps(gt));
    if g == 0.0 || est.len() != gt.len() {
        return Err(Error::Eval("trajectory scale ratio needs matching, moving trajectories".into()));
    }
    Ok(tree_sum(&steps(est)) / g)
}
