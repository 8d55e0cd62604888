//! Coarse depth calibration: per-frame scale factor ε between sparse LiDAR
//! and an unscaled depth prediction, with both robust estimators.

use metricvo::scale::{calibrate_frames, scale_statistics, Estimator};
use metricvo::synth::{generate, SceneSpec};

fn main() -> metricvo::Result<()> {
    let spec = SceneSpec::default();
    let seq = generate(&spec)?;
    let lidar: Vec<_> = seq.frames.iter().map(|f| f.lidar.clone()).collect();
    let pred: Vec<_> = seq.frames.iter().map(|f| f.pretrained.clone()).collect();
    println!("prediction is ground truth / {} with {:.0}% correlated noise", spec.noise.pretrained_scale, 100.0 * spec.noise.pretrained_sigma);

    for est in [Estimator::Median, Estimator::Mean] {
        let frames = calibrate_frames(&lidar, &pred, est, 50)?;
        let eps: Vec<f64> = frames.iter().map(|(s, _)| s.epsilon).collect();
        let stats = scale_statistics(&eps)?;
        println!("{est:?}: ε = {:.3} ± {:.3} over {} frames", stats.mu, stats.sigma, eps.len());
        for (i, (s, _)) in frames.iter().enumerate().take(4) {
            println!("  frame {i}: ε = {:.4} from {} pixels", s.epsilon, s.n_valid);
        }
    }
    Ok(())
}
