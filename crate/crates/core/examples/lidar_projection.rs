//! Projects a synthetic LiDAR scan into the image with a KITTI-style
//! calibration and reports the sparse-depth coverage.

use metricvo::geometry::project_lidar;
use metricvo::synth::{generate, SceneSpec};

fn main() -> metricvo::Result<()> {
    let spec = SceneSpec {
        frames: 2,
        ..SceneSpec::default()
    };
    let seq = generate(&spec)?;
    let k = &seq.intrinsics;
    println!("calibration file:\n{}", seq.calibration.to_text());

    for (i, frame) in seq.frames.iter().enumerate() {
        let sparse = project_lidar(&frame.cloud, &seq.calibration, k.width, k.height);
        let depths: Vec<f64> = sparse.valid_indices().map(|q| sparse.depth[q]).collect();
        let (lo, hi) = depths
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        println!(
            "frame {i}: {} points -> {} pixels ({:.1}% coverage), depth {lo:.2}..{hi:.2} m",
            frame.cloud.len(),
            sparse.n_valid(),
            100.0 * sparse.n_valid() as f64 / k.num_pixels() as f64
        );
    }
    Ok(())
}
