// Compares the two-stage schedule with single-stage training under fixed
// coarse depths and under no depth supervision at all.

use metricvo::eval::{ate_rmse, Alignment, Trajectory};
use metricvo::scale::{calibrate_frames, Estimator};
use metricvo::synth::{generate, SceneSpec};
use metricvo::trainer::{run_single_stage_ablation, run_two_stage, AblationMode, TrainConfig, TrainResult, TrainingSet};

fn main() -> metricvo::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut spec = SceneSpec {
        seed,
        width: 96,
        height: 32,
        focal: 55.0,
        ..SceneSpec::default()
    };
    spec.noise.pretrained_length = 12.0;
    let seq = generate(&spec)?;
    let lidar: Vec<_> = seq.frames.iter().map(|f| f.lidar.clone()).collect();
    let pred: Vec<_> = seq.frames.iter().map(|f| f.pretrained.clone()).collect();
    let data = TrainingSet {
        intrinsics: seq.intrinsics,
        images: seq.frames.iter().map(|f| f.image.clone()).collect(),
        coarse_depths: calibrate_frames(&lidar, &pred, Estimator::Median, 20)?.into_iter().map(|(_, d)| d).collect(),
    };
    let gt = Trajectory::new(seq.gt_poses());
    let cfg = TrainConfig { seed, ..TrainConfig::desk() };

    let runs: Vec<(&str, TrainResult)> = vec![
        ("two-stage", run_two_stage(&data, &cfg)?),
        ("fixed_supervision", run_single_stage_ablation(&data, &cfg, AblationMode::FixedSupervision)?),
        ("no_supervision", run_single_stage_ablation(&data, &cfg, AblationMode::NoSupervision)?),
    ];
    for (name, r) in &runs {
        let est = Trajectory::from_pair_poses(&r.poses);
        let (ate, _) = ate_rmse(&est, &gt, Alignment::None)?;
        let (ate_s, s) = ate_rmse(&est, &gt, Alignment::ScaleOnly)?;
        println!("{name:>18}: ATE {ate:.3} m, scale-aligned ATE {ate_s:.3} m (s = {s:.3})");
    }
    Ok(())
}
