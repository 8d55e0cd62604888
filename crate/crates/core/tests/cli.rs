use std::path::Path;
use std::process::{Command, Output};

fn metricvo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metricvo")).args(args).output().expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("JSON error line");
    serde_json::from_str(line).unwrap()
}

const CONFIG: &str = r#"{
  "seed": 2,
  "scene": {"width": 96, "height": 32, "focal": 55.0, "frames": 6, "noise": {"pretrained_length": 12.0}},
  "calibration": {"min_valid": 20},
  "train": {"stage1_epochs": 3, "total_epochs": 4, "sequences_per_epoch": 3, "switch": {"min_epochs": 2}}
}"#;

fn setup(dir: &Path) -> String {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    cfg.to_str().unwrap().to_string()
}

#[test]
fn help_lists_every_subcommand() {
    let out = metricvo(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["synth", "calibrate", "train", "eval", "render", "gradcheck"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn unknown_subcommand_is_a_config_error() {
    let out = metricvo(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"seed": 1, "no_such_key": true}"#).unwrap();
    let out = metricvo(&["--config", cfg.to_str().unwrap(), "synth", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_stage_needs_a_mode() {
    let out = metricvo(&["train", "--stage", "single", "--data", "/nonexistent"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = metricvo(&["calibrate", "--data", "/nonexistent/dataset", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["exit_code"], 3);
}

#[test]
fn calibrate_recovers_the_prediction_scale() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let (data, run) = (data.to_str().unwrap(), run.to_str().unwrap());
    assert!(metricvo(&["--config", &cfg, "synth", "--out", data]).status.success());
    assert!(metricvo(&["--config", &cfg, "calibrate", "--data", data, "--out", run]).status.success());

    let text = std::fs::read_to_string(Path::new(run).join("calibration.json")).unwrap();
    let report = metricvo::scale::CalibrationReport::from_json(&text).unwrap();
    assert_eq!(report.frames.len(), 6);
    let mu = report.stats.unwrap().mu;
    assert!((mu - 33.0).abs() < 0.5, "mean ε {mu}");
    assert!(Path::new(run).join("calibrate.run.json").exists());
}

#[test]
fn unsupervised_training_misses_the_metric_scale() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let (data, run) = (data.to_str().unwrap(), run.to_str().unwrap());
    assert!(metricvo(&["--config", &cfg, "synth", "--out", data]).status.success());
    let out = metricvo(&["--config", &cfg, "train", "--data", data, "--out", run, "--stage", "single", "--mode", "no_supervision"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let est = format!("{run}/no_supervision");
    let eval = format!("{run}/eval");
    let out = metricvo(&["--config", &cfg, "eval", "--data", data, "--est", &est, "--out", &eval]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(&eval).join("report.json")).unwrap()).unwrap();
    let ratio = report["odometry"]["scale_ratio"].as_f64().unwrap();
    assert!(!(0.8..1.2).contains(&ratio), "scale ratio {ratio}");
}
