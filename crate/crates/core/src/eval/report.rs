use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::{
    ate_rmse, kitti_segment_errors, trajectory_scale_ratio, Alignment, DepthMetrics, EvalConfig, Trajectory,
};
use crate::error::{Error, Result};
use crate::image::write_file;
use crate::scale::ScaleStats;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdometryReport {
    pub frames: usize,
    /// Percent; absent when the path is shorter than every segment length.
    pub t_rel: Option<f64>,
    /// Degrees per 100 m.
    pub r_rel: Option<f64>,
    pub segments: usize,
    pub ate_rmse: f64,
    /// Scale applied to the estimate before the ATE.
    pub ate_scale: f64,
    /// Estimated over ground-truth path length.
    pub scale_ratio: f64,
}

/// Drift, ATE and scale ratio. Relative errors use the aligned estimate.
pub fn evaluate_odometry(est: &Trajectory, gt: &Trajectory, cfg: &EvalConfig) -> Result<OdometryReport> {
    let (ate, s) = ate_rmse(est, gt, cfg.alignment)?;
    let aligned = if cfg.alignment == Alignment::None { est.clone() } else { est.scaled(s) };
    let (t_rel, r_rel, segments) = match kitti_segment_errors(&aligned, gt, &cfg.segment_lengths) {
        Ok(e) => (Some(e.t_rel), Some(e.r_rel), e.segments),
        Err(Error::Eval(msg)) if msg.contains("shorter") => {
            log::warn!("{msg}; relative drift not reported");
            (None, None, 0)
        }
        Err(e) => return Err(e),
    };
    Ok(OdometryReport {
        frames: est.len(),
        t_rel,
        r_rel,
        segments,
        ate_rmse: ate,
        ate_scale: s,
        scale_ratio: trajectory_scale_ratio(est, gt)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub version: u32,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub sequence: String,
    pub method: String,
    pub sensors: String,
    pub alignment: Alignment,
    pub odometry: Option<OdometryReport>,
    pub depth: Option<DepthMetrics>,
    pub depth_frames: usize,
    /// `[width, height]` of the evaluated depth maps.
    pub resolution: Option<[usize; 2]>,
    /// Mean and spread of per-frame depth scale ratios (ground truth over
    /// prediction).
    pub scale: Option<ScaleStats>,
}

impl EvalReport {
    pub fn new(sequence: &str, cfg: &EvalConfig) -> Self {
        EvalReport {
            version: REPORT_VERSION,
            config_hash: None,
            seed: None,
            sequence: sequence.to_string(),
            method: cfg.method.clone(),
            sensors: cfg.sensors.clone(),
            alignment: cfg.alignment,
            odometry: None,
            depth: None,
            depth_frames: 0,
            resolution: None,
            scale: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// CSV rows `frame,x,y,z,qx,qy,qz,qw`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::from("frame,x,y,z,qx,qy,qz,qw\n");
    for (f, p) in traj.frames.iter().zip(&traj.poses) {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(p.rotation));
        let t = p.translation;
        writeln!(s, "{f},{},{},{},{},{},{},{}", t.x, t.y, t.z, q.i, q.j, q.k, q.w).unwrap();
    }
    s
}

/// Top-down (x, z) plot of the estimate against ground truth.
pub fn trajectory_svg(est: &Trajectory, gt: Option<&Trajectory>, title: &str) -> String {
    let all: Vec<(f64, f64)> = est
        .poses
        .iter()
        .chain(gt.map(|g| g.poses.iter()).into_iter().flatten())
        .map(|p| (p.translation.x, p.translation.z))
        .collect();
    let (mut x0, mut x1, mut z0, mut z1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, z) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        z0 = z0.min(z);
        z1 = z1.max(z);
    }
    if all.is_empty() {
        (x0, x1, z0, z1) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = (x1 - x0).max(z1 - z0).max(1e-9);
    let pad = 0.05 * span;
    let stroke = span / 200.0;
    // SVG y grows downwards; plot -z so forward motion points up.
    let path = |t: &Trajectory| -> String {
        t.poses
            .iter()
            .map(|p| format!("{},{}", p.translation.x, -p.translation.z))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="640" height="640">"#,
        x0 - pad,
        -z1 - pad,
        (x1 - x0) + 2.0 * pad,
        (z1 - z0) + 2.0 * pad
    )
    .unwrap();
    writeln!(s, "<title>{}</title>", title.replace('<', "&lt;").replace('&', "&amp;")).unwrap();
    if let Some(g) = gt {
        writeln!(
            s,
            r#"<polyline id="gt" fill="none" stroke="black" stroke-width="{stroke}" points="{}"/>"#,
            path(g)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<polyline id="est" fill="none" stroke="red" stroke-width="{stroke}" points="{}"/>"#,
        path(est)
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

/// One method's row of the pose table, with per-sequence `(t_rel, r_rel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTableRow {
    pub method: String,
    pub sensors: String,
    pub scaled: bool,
    pub sequences: Vec<(String, f64, f64)>,
}

fn check(scaled: bool) -> &'static str {
    if scaled {
        "yes"
    } else {
        "no"
    }
}

/// Pose table: Method, Sensors, Scale, then `t_rel`/`r_rel` per sequence and
/// their average.
pub fn pose_table_csv(rows: &[PoseTableRow]) -> Result<String> {
    let Some(first) = rows.first() else {
        return Err(Error::Eval("pose table needs at least one row".into()));
    };
    let names: Vec<&str> = first.sequences.iter().map(|s| s.0.as_str()).collect();
    let mut s = String::from("method,sensors,scale");
    for n in &names {
        write!(s, ",seq_{n}_t_rel,seq_{n}_r_rel").unwrap();
    }
    s.push_str(",avg_t_rel,avg_r_rel\n");
    for r in rows {
        if r.sequences.iter().map(|x| x.0.as_str()).ne(names.iter().copied()) {
            return Err(Error::Eval("pose table rows cover different sequences".into()));
        }
        write!(s, "{},{},{}", r.method, r.sensors, check(r.scaled)).unwrap();
        for (_, t, rr) in &r.sequences {
            write!(s, ",{t},{rr}").unwrap();
        }
        let n = r.sequences.len().max(1) as f64;
        let t: f64 = r.sequences.iter().map(|x| x.1).sum::<f64>() / n;
        let rr: f64 = r.sequences.iter().map(|x| x.2).sum::<f64>() / n;
        writeln!(s, ",{t},{rr}").unwrap();
    }
    Ok(s)
}

/// Depth table: Method, Sensors, Resolution, Scale, Abs Rel, Sq Rel, RMSE,
/// δ < 1.25, δ < 1.25², δ < 1.25³.
pub fn depth_table_csv(rows: &[(String, String, [usize; 2], bool, DepthMetrics)]) -> String {
    let mut s = String::from("method,sensors,resolution,scale,abs_rel,sq_rel,rmse,delta_1.25,delta_1.25^2,delta_1.25^3\n");
    for (method, sensors, res, scaled, m) in rows {
        writeln!(
            s,
            "{method},{sensors},{}x{},{},{},{},{},{},{},{}",
            res[0],
            res[1],
            check(*scaled),
            m.abs_rel,
            m.sq_rel,
            m.rmse,
            m.delta[0],
            m.delta[1],
            m.delta[2]
        )
        .unwrap();
    }
    s
}

/// Pose table over several per-sequence reports: one row per method,
/// sensors and alignment, with the sequences in first-seen order.
pub fn pose_table_from_reports(reports: &[EvalReport]) -> Result<String> {
    let mut rows: Vec<PoseTableRow> = Vec::new();
    for r in reports {
        let Some(odo) = &r.odometry else { continue };
        let (Some(t), Some(rr)) = (odo.t_rel, odo.r_rel) else {
            return Err(Error::Eval(format!("report for sequence {} has no relative errors", r.sequence)));
        };
        let scaled = r.alignment != Alignment::None;
        let entry = (r.sequence.clone(), t, rr);
        match rows
            .iter_mut()
            .find(|row| row.method == r.method && row.sensors == r.sensors && row.scaled == scaled)
        {
            Some(row) => row.sequences.push(entry),
            None => rows.push(PoseTableRow {
                method: r.method.clone(),
                sensors: r.sensors.clone(),
                scaled,
                sequences: vec![entry],
            }),
        }
    }
    pose_table_csv(&rows)
}

/// Depth table with one row per report that has depth metrics.
pub fn depth_table_from_reports(reports: &[EvalReport]) -> String {
    let rows: Vec<_> = reports
        .iter()
        .filter_map(|r| Some((r.method.clone(), r.sensors.clone(), r.resolution?, false, r.depth?)))
        .collect();
    depth_table_csv(&rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub report: PathBuf,
    pub trajectory_csv: Option<PathBuf>,
    pub trajectory_svg: Option<PathBuf>,
    pub pose_table: Option<PathBuf>,
    pub depth_table: Option<PathBuf>,
}

/// Writes `report.json` and, when available, `trajectory.csv`,
/// `trajectory_gt.csv`, `trajectory.svg`, `table_pose.csv` and
/// `table_depth.csv` into `dir`.
pub fn emit_report(report: &EvalReport, est: Option<&Trajectory>, gt: Option<&Trajectory>, dir: &Path) -> Result<ReportPaths> {
    let report_path = dir.join("report.json");
    write_file(&report_path, report.to_json()?.as_bytes())?;
    let mut paths = ReportPaths {
        report: report_path,
        trajectory_csv: None,
        trajectory_svg: None,
        pose_table: None,
        depth_table: None,
    };
    if let Some(est) = est {
        let p = dir.join("trajectory.csv");
        write_file(&p, trajectory_csv(est).as_bytes())?;
        paths.trajectory_csv = Some(p);
        if let Some(gt) = gt {
            write_file(&dir.join("trajectory_gt.csv"), trajectory_csv(gt).as_bytes())?;
        }
        let title = format!(
            "{} sequence {} config {}",
            report.method,
            report.sequence,
            report.config_hash.as_deref().unwrap_or("none")
        );
        let p = dir.join("trajectory.svg");
        write_file(&p, trajectory_svg(est, gt, &title).as_bytes())?;
        paths.trajectory_svg = Some(p);
    }
    let scaled = report.alignment != Alignment::None;
    if let Some(odo) = &report.odometry {
        if let (Some(t), Some(r)) = (odo.t_rel, odo.r_rel) {
            let row = PoseTableRow {
                method: report.method.clone(),
                sensors: report.sensors.clone(),
                scaled,
                sequences: vec![(report.sequence.clone(), t, r)],
            };
            let p = dir.join("table_pose.csv");
            write_file(&p, pose_table_csv(&[row])?.as_bytes())?;
            paths.pose_table = Some(p);
        }
    }
    if let (Some(m), Some(res)) = (report.depth, report.resolution) {
        let p = dir.join("table_depth.csv");
        // Depth maps are evaluated as given; no alignment is ever applied.
        let row = (report.method.clone(), report.sensors.clone(), res, false, m);
        write_file(&p, depth_table_csv(&[row]).as_bytes())?;
        paths.depth_table = Some(p);
    }
    Ok(paths)
}
