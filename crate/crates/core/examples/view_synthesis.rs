//! Inverse warping of the source frame into the target view, and the pair
//! losses at the true pose versus a perturbed one.

use metricvo::geometry::{se3_exp, Twist};
use metricvo::losses::{evaluate_pair, synthesize, LossWeights, PairInput};
use metricvo::synth::{generate, SceneSpec};

fn main() -> metricvo::Result<()> {
    let spec = SceneSpec {
        frames: 2,
        ..SceneSpec::default()
    }
    .noiseless();
    let seq = generate(&spec)?;
    let (t, s) = (&seq.frames[0], &seq.frames[1]);
    let truth = seq.pair_pose(0);

    let warped = synthesize(&s.image, &t.depth, &truth, &seq.intrinsics);
    println!("valid fraction of the warp: {:.3}", warped.mask.valid_fraction());

    println!("{:>10} {:>14} {:>14} {:>14}", "offset", "photometric", "geometric", "|grad pose|");
    for dz in [0.0, 0.01, 0.05, 0.2] {
        let pose = se3_exp(&Twist::from_array([0.0, 0.0, dz, 0.0, 0.0, 0.0])).compose(&truth);
        let input = PairInput {
            target: &t.image,
            source: &s.image,
            target_depth: &t.depth,
            source_depth: &s.depth,
            pose: &pose,
            intrinsics: &seq.intrinsics,
        };
        let l = evaluate_pair(&input, &LossWeights::default());
        println!(
            "{dz:>10.2} {:>14.3e} {:>14.3e} {:>14.3e}",
            l.photometric,
            l.geometric,
            (l.grad_pose_photometric + l.grad_pose_geometric).norm()
        );
    }
    Ok(())
}
