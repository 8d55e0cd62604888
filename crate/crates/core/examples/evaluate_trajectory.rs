//! KITTI-style odometry evaluation of a drifting estimate against ground
//! truth, written as `report.json`, trajectory CSV/SVG and a pose
//! table.

use metricvo::eval::{emit_report, evaluate_odometry, EvalConfig, EvalReport, Trajectory};
use metricvo::geometry::{se3_exp, Pose, Twist};

fn drive(n: usize, speed: f64, yaw_bias: f64) -> Trajectory {
    let mut poses = vec![Pose::identity()];
    for i in 0..n {
        let yaw = 0.004 * (i as f64 * 0.015).sin() + yaw_bias;
        let step = se3_exp(&Twist::from_array([0.0, 0.0, speed, 0.0, yaw, 0.0]));
        let next = poses.last().unwrap().compose(&step);
        poses.push(next);
    }
    Trajectory::new(poses)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gt = drive(1000, 1.0, 0.0);
    let est = drive(1000, 1.03, 1e-4);
    let cfg = EvalConfig::default();
    let odo = evaluate_odometry(&est, &gt, &cfg)?;
    println!("t_rel {:.3} %   r_rel {:.4} deg/100m   ATE {:.2} m over {} segments", odo.t_rel.unwrap(), odo.r_rel.unwrap(), odo.ate_rmse, odo.segments);

    let dir = std::env::temp_dir().join("metricvo_eval_example");
    std::fs::create_dir_all(&dir)?;
    let mut report = EvalReport::new("09", &cfg);
    report.odometry = Some(odo);
    let paths = emit_report(&report, Some(&est), Some(&gt), &dir)?;
    println!("report written to {}", paths.report.display());
    if let Some(t) = paths.pose_table {
        print!("{}", std::fs::read_to_string(t)?);
    }
    Ok(())
}
