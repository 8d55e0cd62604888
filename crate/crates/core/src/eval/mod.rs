//! Odometry and depth evaluation.
//!
//! Trajectories are sequences of camera → world poses. Translational drift
//! follows the KITTI odometry convention (segments of 100 to 800 m along the
//! ground-truth path); ATE is the RMSE of camera positions with optional
//! scale alignment; depth metrics are the usual Abs Rel / Sq Rel / RMSE / δ
//! set over LiDAR-covered pixels.

mod depth;
mod odometry;
mod report;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use depth::{depth_metrics, mean_depth_metrics, DepthMetrics, DELTA_THRESHOLDS, DEPTH_CAP};
pub use odometry::{
    ate_rmse, kitti_segment_errors, optimal_scale, path_distances, trajectory_scale_ratio, Alignment, SegmentErrors,
    SEGMENT_LENGTHS,
};
pub use report::{
    depth_table_csv, depth_table_from_reports, emit_report, evaluate_odometry, pose_table_csv, pose_table_from_reports,
    trajectory_csv, trajectory_svg, EvalReport,
    OdometryReport, PoseTableRow, ReportPaths, REPORT_VERSION,
};

use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Segment lengths (m) for the relative drift metrics.
    pub segment_lengths: Vec<f64>,
    /// Ground-truth depths beyond this are ignored (m).
    pub depth_cap: f64,
    pub alignment: Alignment,
    /// Labels for the table rows.
    pub method: String,
    pub sensors: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            segment_lengths: SEGMENT_LENGTHS.to_vec(),
            depth_cap: DEPTH_CAP,
            alignment: Alignment::None,
            method: "Ours".into(),
            sensors: "Mono".into(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segment_lengths.is_empty() || !self.segment_lengths.iter().all(|l| *l > 0.0) {
            return Err(Error::Config("segment lengths must be positive".into()));
        }
        if !(self.depth_cap > 0.0) {
            return Err(Error::Config("depth cap must be positive".into()));
        }
        Ok(())
    }
}

/// Camera → world poses, one per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
    pub frames: Vec<usize>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Self {
        let frames = (0..poses.len()).collect();
        Trajectory { poses, frames }
    }

    /// From the optimizer's pair poses, each mapping camera `i` to `i + 1`.
    pub fn from_pair_poses(pairs: &[Pose]) -> Self {
        let motion: Vec<Pose> = pairs.iter().map(Pose::inverse).collect();
        accumulate(&motion)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.translation).collect()
    }

    /// Motion between consecutive frames, `G_i⁻¹ · G_{i+1}`.
    pub fn relative(&self) -> Vec<Pose> {
        self.poses.windows(2).map(|w| w[0].inverse().compose(&w[1])).collect()
    }

    /// Same rotations, positions multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Trajectory {
        Trajectory {
            poses: self.poses.iter().map(|p| Pose::new(p.rotation, p.translation * s)).collect(),
            frames: self.frames.clone(),
        }
    }
}

/// Left fold of relative motions starting at the identity:
/// `G_0 = I`, `G_{i+1} = G_i · M_i`.
pub fn accumulate(relative: &[Pose]) -> Trajectory {
    let mut poses = Vec::with_capacity(relative.len() + 1);
    poses.push(Pose::identity());
    for m in relative {
        let next = poses.last().unwrap().compose(m);
        poses.push(next);
    }
    Trajectory::new(poses)
}
