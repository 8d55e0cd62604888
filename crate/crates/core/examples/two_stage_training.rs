//! Calibrate, then run coarse pose recovery followed by bi-directional
//! refinement on a small synthetic sequence. Prints the loss curve of each
//! stage and the recovered metric scale.
//!
//! ```text
//! cargo run --release --example two_stage_training
//! ```

use metricvo::eval::{ate_rmse, trajectory_scale_ratio, Alignment, Trajectory};
use metricvo::scale::{calibrate_frames, estimate_scale, scale_statistics, Estimator};
use metricvo::synth::{generate, SceneSpec};
use metricvo::trainer::{run_stage1, run_stage2, Phase, TrainConfig, TrainingSet};

fn main() -> metricvo::Result<()> {
    let mut spec = SceneSpec {
        width: 96,
        height: 32,
        focal: 55.0,
        ..SceneSpec::default()
    };
    spec.noise.pretrained_length = 12.0;
    let seq = generate(&spec)?;

    let lidar: Vec<_> = seq.frames.iter().map(|f| f.lidar.clone()).collect();
    let pred: Vec<_> = seq.frames.iter().map(|f| f.pretrained.clone()).collect();
    let coarse = calibrate_frames(&lidar, &pred, Estimator::Median, 20)?;
    let data = TrainingSet {
        intrinsics: seq.intrinsics,
        images: seq.frames.iter().map(|f| f.image.clone()).collect(),
        coarse_depths: coarse.into_iter().map(|(_, d)| d).collect(),
    };

    let cfg = TrainConfig::desk();
    let gt = Trajectory::new(seq.gt_poses());

    let s1 = run_stage1(&data, &cfg)?;
    let l1 = s1.log.losses(Phase::Stage1);
    println!("stage 1: {} epochs, loss {:.4} -> {:.4}", l1.len(), l1[0], l1[l1.len() - 1]);
    let est1 = Trajectory::from_pair_poses(&s1.poses);
    println!("  ATE {:.3} m", ate_rmse(&est1, &gt, Alignment::None)?.0);

    let s2 = run_stage2(&data, &cfg, &s1)?;
    let l2 = s2.log.losses(Phase::Stage2);
    println!("stage 2: {} epochs, loss {:.4} -> {:.4}", l2.len(), l2[0], l2[l2.len() - 1]);
    let est2 = Trajectory::from_pair_poses(&s2.poses);
    println!("  ATE {:.3} m, path length ratio {:.4}", ate_rmse(&est2, &gt, Alignment::None)?.0, trajectory_scale_ratio(&est2, &gt)?);

    let depths = s2.depths().expect("stage 2 learns depth");
    let ratios = depths
        .iter()
        .zip(&lidar)
        .map(|(d, l)| estimate_scale(l, d, Estimator::Median, 20).map(|s| s.epsilon))
        .collect::<metricvo::Result<Vec<_>>>()?;
    let st = scale_statistics(&ratios)?;
    println!("learned depth vs LiDAR: μ = {:.4}, δ = {:.4}", st.mu, st.sigma);
    Ok(())
}
