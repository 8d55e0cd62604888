//! Reading and writing the KITTI text formats: 3x4 row-major pose files and
//! `calib.txt` projection/extrinsic matrices.

use metricvo::dataio::{format_poses, parse_poses};
use metricvo::geometry::{se3_exp, CalibrationSet, CameraIntrinsics, Twist};

fn main() -> metricvo::Result<()> {
    let poses: Vec<_> = (0..4)
        .map(|i| se3_exp(&Twist::from_array([0.0, 0.0, i as f64, 0.0, 0.02 * i as f64, 0.0])))
        .collect();
    let text = format_poses(&poses);
    print!("{text}");
    let back = parse_poses(&text).map_err(metricvo::Error::Eval)?;
    let err = poses
        .iter()
        .zip(&back)
        .map(|(a, b)| (a.to_homogeneous() - b.to_homogeneous()).abs().max())
        .fold(0.0, f64::max);
    println!("round-trip error {err:.1e}\n");

    let k = CameraIntrinsics::new(718.856, 718.856, 607.19, 185.22, 1241, 376)?;
    let calib = CalibrationSet::identity(&k);
    let calib_text = calib.to_text();
    print!("{calib_text}");
    let parsed = CalibrationSet::parse(&calib_text).map_err(metricvo::Error::Calibration)?;
    let k2 = parsed.intrinsics(1241, 376)?;
    println!("parsed fx {} cx {} cy {}", k2.fx, k2.cx, k2.cy);
    Ok(())
}
