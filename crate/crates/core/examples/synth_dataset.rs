//! Renders a synthetic sequence and writes it in the on-disk dataset layout
//! (images, LiDAR scans, calibration, poses, timestamps, pretrained depth),
//! then loads it back.
//!
//! ```text
//! cargo run --release --example synth_dataset -- /tmp/metricvo_data
//! ```

use std::path::PathBuf;

use metricvo::dataio::load_sequence;
use metricvo::synth::{generate, write_dataset, SceneSpec};

fn main() -> metricvo::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("metricvo_synth_example"));
    let spec = SceneSpec {
        frames: 8,
        ..SceneSpec::default()
    };
    let seq = generate(&spec)?;
    write_dataset(&seq, &root, "00", None)?;
    println!("wrote {} frames of {}x{} to {}", seq.frames.len(), spec.width, spec.height, root.display());

    let loaded = load_sequence(&root, "00")?;
    let k = loaded.intrinsics()?;
    println!("reloaded {} frames, fx = {:.1}", loaded.len(), k.fx);
    for i in 0..loaded.len() {
        let lidar = loaded.lidar_depth(i, k.width, k.height)?;
        let pred = loaded.pretrained(i)?;
        println!(
            "  frame {i}: t = {:.3} s, {} LiDAR pixels, pretrained depth at centre {:.3}",
            loaded.manifest.timestamps[i],
            lidar.n_valid(),
            pred.get(k.width / 2, k.height / 2)
        );
    }
    Ok(())
}
