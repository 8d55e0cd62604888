//! Exponential and logarithm maps on SE(3), and the pose convention used by
//! the optimizer.
//!
//! Run with `cargo run --example se3_round_trip`.

use metricvo::geometry::{se3_exp, se3_log, Twist};

fn main() -> metricvo::Result<()> {
    let twists = [
        [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        [0.2, -0.1, 0.9, 0.01, 0.03, -0.02],
        [1.0, 2.0, 3.0, 1e-7, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 3.0, 0.0],
    ];
    println!("{:>42} {:>12} {:>12}", "twist (v, w)", "|log(exp)-x|", "orthonorm.");
    for t in twists {
        let x = Twist::from_array(t);
        let pose = se3_exp(&x);
        let back = se3_log(&pose)?;
        let err = (back.0 - x.0).norm();
        println!("{:>42} {:>12.2e} {:>12.2e}", format!("{t:?}"), err, pose.orthonormality_error());
    }

    // Left perturbation: exp(δ)·T.
    let t = se3_exp(&Twist::from_array([0.0, 0.0, 1.0, 0.0, 0.05, 0.0]));
    let delta = Twist::from_array([1e-3, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let moved = t.perturb_left(&delta);
    println!("\nT translation      {:?}", t.translation.as_slice());
    println!("exp(δ)·T translation {:?}", moved.translation.as_slice());
    Ok(())
}
