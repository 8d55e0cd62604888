//! The `metricvo` command line.
//!
//! Every subcommand reads an optional JSON [`RunConfig`] (`--config`), lets
//! flags override it, and writes its artifacts together with a
//! `<command>.run.json` stamp holding the config hash, the seed and the
//! SHA-256 of each file written. Failures print one JSON object on stderr and
//! exit with 2 (config), 3 (data) or 4 (numeric).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::dataio::{load_sequence, read_poses, write_poses, Sequence};
use crate::depthfield::{read_depth, read_sparse_pgm, write_depth_bin, DepthMap, SparseDepthImage};
use crate::error::{Error, Result};
use crate::eval::{
    depth_metrics, depth_table_from_reports, emit_report, evaluate_odometry, mean_depth_metrics, pose_table_from_reports,
    Alignment, EvalReport, Trajectory,
};
use crate::image::{write_file, Image};
use crate::losses::synthesize;
use crate::scale::{calibrate_frames, estimate_scale, scale_statistics, CalibrationReport, ScaleFactor};
use crate::synth::{generate, write_dataset};
use crate::trainer::{
    gradient_check, train, AblationMode, Checkpoint, GradCheckInstance, GradCheckTolerance, LossSelector, Phase,
    TrainingSet,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Environment variable holding the `env_logger` filter (default `warn`).
pub const LOG_ENV: &str = "METRICVO_LOG";

#[derive(Debug, Parser)]
#[command(name = "metricvo", version, about = "Metric-scale monocular odometry and depth by direct optimization")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset root in the KITTI layout.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    sequence: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-pixel work (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic sequence with exact ground truth into `--out`.
    Synth(SynthArgs),
    /// Per-frame depth scale of the pretrained predictions against LiDAR.
    Calibrate,
    /// Run stage 1, stage 2, both, or a single-stage ablation.
    Train(TrainArgs),
    /// Odometry and depth metrics, written as KITTI-style result tables.
    Eval(EvalArgs),
    /// Depth, warp, mask and residual images for one frame pair.
    Render(RenderArgs),
    /// Compare analytic loss gradients with central differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Turn off pretrained-depth noise and write it at scale 1.
    #[arg(long)]
    noiseless: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StageArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    /// Stage 1 then stage 2.
    Both,
    /// One stage over the whole budget; needs `--mode`.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ModeArg {
    FixedSupervision,
    NoSupervision,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "both")]
    stage: StageArg,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Calibration JSON; defaults to `<out>/calibration.json` when present,
    /// otherwise the sequence is calibrated on the fly.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Stage-1 checkpoint used to start stage 2 (default `<out>/stage1/checkpoint.json`).
    #[arg(long)]
    init: Option<PathBuf>,
    /// Continue from the phase's checkpoint in `--out` if one exists.
    #[arg(long)]
    resume: bool,
    /// Stop after this many epochs of the current phase (the checkpoint can be resumed).
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum AlignArg {
    None,
    ScaleOnly,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Ground-truth poses (KITTI text format); defaults to the dataset's.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Estimated poses, or a train output directory containing `poses.txt`.
    #[arg(long)]
    est: Option<PathBuf>,
    #[arg(long, value_enum)]
    align: Option<AlignArg>,
    /// Predicted depth maps (`.bin` or `.pgm`), one per frame in name order.
    #[arg(long)]
    depth_dir: Option<PathBuf>,
    /// Sparse ground-truth depth PGMs; defaults to projecting the dataset's LiDAR.
    #[arg(long)]
    depth_gt: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    sensors: Option<String>,
    /// Merge existing `report.json` files into multi-sequence tables
    /// instead of evaluating.
    #[arg(long, num_args = 1.., conflicts_with_all = ["gt", "est", "depth_dir", "depth_gt"])]
    combine: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Target frame; the source is the next frame.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Depth maps to render with; defaults to the calibrated coarse depth.
    #[arg(long)]
    depth_dir: Option<PathBuf>,
    /// Camera poses to warp with; defaults to the dataset's ground truth.
    #[arg(long)]
    poses: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Loss to check (photometric, geometric, smoothness, forward, backward,
    /// refine); all when omitted.
    #[arg(long)]
    loss: Option<LossSelector>,
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 24)]
    height: usize,
    #[arg(long, default_value_t = 3)]
    frames: usize,
    /// Add a deliberate error to one analytic coordinate (tests the checker).
    #[arg(long, hide = true)]
    corrupt: Option<usize>,
}

/// Runs the command line with the process arguments; returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Same as [`run`] with explicit arguments (the first is the program name).
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    EXIT_OK
                }
                _ => {
                    print_error("config", EXIT_CONFIG, e.to_string().trim_end());
                    EXIT_CONFIG
                }
            };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            print_error(e.kind(), code, &e.to_string());
            code
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        "config" => EXIT_CONFIG,
        "divergence" | "numeric" => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn print_error(kind: &str, code: i32, message: &str) {
    let obj = serde_json::json!({ "error": kind, "exit_code": code, "message": message });
    eprintln!("{obj}");
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let g = &cli.global;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(d) = &g.data {
        cfg.dataset = Some(d.clone());
    }
    if let Some(s) = &g.sequence {
        cfg.sequence = s.clone();
    }
    if let Some(o) = &g.out {
        cfg.output = Some(o.clone());
    }
    match &cli.command {
        Command::Synth(a) => {
            if let Some(n) = a.frames {
                cfg.scene.frames = n;
            }
            if let Some(w) = a.width {
                cfg.scene.width = w;
            }
            if let Some(h) = a.height {
                cfg.scene.height = h;
            }
            if a.noiseless {
                cfg.scene = cfg.scene.noiseless();
            }
        }
        Command::Eval(a) => {
            if let Some(al) = a.align {
                cfg.eval.alignment = match al {
                    AlignArg::None => Alignment::None,
                    AlignArg::ScaleOnly => Alignment::ScaleOnly,
                };
            }
            if let Some(m) = &a.method {
                cfg.eval.method = m.clone();
            }
            if let Some(s) = &a.sensors {
                cfg.eval.sensors = s.clone();
            }
        }
        _ => {}
    }
    let cfg = cfg.resolved()?;
    let ctx = Context::new(cfg)?;
    let body = || match &cli.command {
        Command::Synth(_) => cmd_synth(&ctx),
        Command::Calibrate => cmd_calibrate(&ctx),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Render(a) => cmd_render(&ctx, a),
        Command::Gradcheck(a) => cmd_gradcheck(&ctx, a),
    };
    match g.workers {
        Some(0) => Err(Error::Config("--workers must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(body),
        None => body(),
    }
}

/// Resolved config and its identity.
struct Context {
    cfg: RunConfig,
    hash: String,
}

#[derive(Serialize)]
struct RunStamp<'a> {
    command: &'a str,
    version: &'static str,
    config_hash: &'a str,
    seed: u64,
    config: RunConfig,
    /// Output files (relative to the stamp) and their SHA-256.
    outputs: BTreeMap<String, String>,
    summary: serde_json::Value,
}

impl Context {
    fn new(cfg: RunConfig) -> Result<Self> {
        let hash = cfg.hash()?;
        Ok(Context { cfg, hash })
    }

    fn comment(&self) -> String {
        format!("metricvo config {} seed {}", self.hash, self.cfg.seed)
    }

    fn out_dir(&self) -> Result<&Path> {
        self.cfg
            .output
            .as_deref()
            .ok_or_else(|| Error::Config("no output directory: pass --out or set \"output\"".into()))
    }

    fn sequence(&self) -> Result<Sequence> {
        let root = self
            .cfg
            .dataset
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset: pass --data or set \"dataset\"".into()))?;
        load_sequence(root, &self.cfg.sequence)
    }

    /// Writes `<dir>/<command>.run.json` covering `files`.
    fn stamp(&self, dir: &Path, command: &str, files: &[PathBuf], summary: serde_json::Value) -> Result<()> {
        let mut outputs = BTreeMap::new();
        for f in files {
            let bytes = std::fs::read(f).map_err(|e| Error::io(f, e))?;
            let name = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().replace('\\', "/");
            outputs.insert(name, hex::encode(Sha256::digest(&bytes)));
        }
        let stamp = RunStamp {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: &self.hash,
            seed: self.cfg.seed,
            config: self.cfg.identity(),
            outputs,
            summary,
        };
        let path = dir.join(format!("{command}.run.json"));
        write_file(&path, serde_json::to_string_pretty(&stamp)?.as_bytes())
    }
}

fn files_under(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let p = entry.map_err(|e| Error::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with(".run.json") {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn cmd_synth(ctx: &Context) -> Result<()> {
    let root = ctx.out_dir()?;
    let seq = generate(&ctx.cfg.scene)?;
    write_dataset(&seq, root, &ctx.cfg.sequence, Some(&ctx.comment()))?;
    let dir = crate::dataio::sequence_dir(root, &ctx.cfg.sequence);
    let mut files = files_under(&dir)?;
    let poses = crate::dataio::poses_path(root, &ctx.cfg.sequence);
    files.push(poses);
    let summary = serde_json::json!({
        "frames": seq.frames.len(),
        "width": ctx.cfg.scene.width,
        "height": ctx.cfg.scene.height,
        "pretrained_scale": ctx.cfg.scene.noise.pretrained_scale,
    });
    ctx.stamp(root, "synth", &files, summary)?;
    log::info!("wrote {} frames to {}", seq.frames.len(), dir.display());
    Ok(())
}

/// LiDAR depth images and pretrained predictions of every frame.
fn lidar_and_predictions(seq: &Sequence) -> Result<(Vec<SparseDepthImage>, Vec<DepthMap>)> {
    let mut lidar = Vec::with_capacity(seq.len());
    let mut pred = Vec::with_capacity(seq.len());
    for i in 0..seq.len() {
        let p = seq.pretrained(i)?;
        lidar.push(seq.lidar_depth(i, p.width, p.height)?);
        pred.push(p);
    }
    Ok((lidar, pred))
}

fn calibrate(ctx: &Context, seq: &Sequence) -> Result<(CalibrationReport, Vec<DepthMap>)> {
    let (lidar, pred) = lidar_and_predictions(seq)?;
    let c = &ctx.cfg.calibration;
    let frames = calibrate_frames(&lidar, &pred, c.estimator, c.min_valid)?;
    let (scales, coarse): (Vec<ScaleFactor>, Vec<DepthMap>) = frames.into_iter().unzip();
    let report = CalibrationReport::new(&ctx.hash, ctx.cfg.seed, &ctx.cfg.sequence, c.estimator, scales);
    Ok((report, coarse))
}

fn cmd_calibrate(ctx: &Context) -> Result<()> {
    let out = ctx.out_dir()?;
    let seq = ctx.sequence()?;
    let (report, _) = calibrate(ctx, &seq)?;
    let path = out.join("calibration.json");
    write_file(&path, report.to_json()?.as_bytes())?;
    let summary = serde_json::to_value(report.stats)?;
    ctx.stamp(out, "calibrate", &[path], summary)?;
    if let Some(s) = report.stats {
        log::info!("ε mean {:.6} std {:.6} over {} frames", s.mu, s.sigma, report.frames.len());
    }
    Ok(())
}

/// Coarse depths from a calibration file, or by calibrating now.
fn coarse_depths(ctx: &Context, seq: &Sequence, calibration: Option<&Path>) -> Result<Vec<DepthMap>> {
    let default = ctx.out_dir()?.join("calibration.json");
    let path = calibration.map(Path::to_path_buf).or_else(|| default.exists().then_some(default));
    let Some(path) = path else {
        log::info!("no calibration file, calibrating {} frames", seq.len());
        return Ok(calibrate(ctx, seq)?.1);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let report = CalibrationReport::from_json(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if report.frames.len() != seq.len() {
        return Err(Error::format(
            &path,
            format!("{} calibrated frames for a {}-frame sequence", report.frames.len(), seq.len()),
        ));
    }
    (0..seq.len())
        .map(|i| Ok(seq.pretrained(i)?.scaled(report.frames[i].epsilon)))
        .collect()
}

fn training_set(ctx: &Context, seq: &Sequence, calibration: Option<&Path>) -> Result<TrainingSet> {
    let images = (0..seq.len()).map(|i| seq.image(i)).collect::<Result<Vec<_>>>()?;
    Ok(TrainingSet {
        intrinsics: seq.intrinsics()?,
        images,
        coarse_depths: coarse_depths(ctx, seq, calibration)?,
    })
}

fn phase_dir_name(phase: Phase) -> &'static str {
    match phase {
        Phase::Stage1 => "stage1",
        Phase::Stage2 => "stage2",
        Phase::FixedSupervision => "fixed_supervision",
        Phase::NoSupervision => "no_supervision",
    }
}

/// Runs (or resumes) one phase, checkpointing after every epoch, then writes
/// its poses, learned depths and stamp.
fn run_phase(
    ctx: &Context,
    data: &TrainingSet,
    args: &TrainArgs,
    fresh: impl FnOnce() -> Result<Checkpoint>,
) -> Result<Checkpoint> {
    let mut ckpt = fresh()?;
    let dir = ctx.out_dir()?.join(phase_dir_name(ckpt.phase));
    let path = dir.join("checkpoint.json");
    if args.resume && path.exists() {
        let saved = Checkpoint::load(&path)?;
        if saved.phase != ckpt.phase {
            return Err(Error::Config(format!("{} holds a {:?} checkpoint", path.display(), saved.phase)));
        }
        log::info!("resuming {:?} at epoch {}", saved.phase, saved.epoch);
        ckpt = saved;
    }
    let cfg = &ctx.cfg.train;
    train(data, cfg, &mut ckpt, args.stop_after, |c| c.save(&path))?;
    ckpt.save(&path)?;

    let traj = Trajectory::from_pair_poses(&ckpt.poses);
    let poses_path = dir.join("poses.txt");
    write_poses(&poses_path, &traj.poses)?;
    let mut files = vec![path.clone(), poses_path];
    if let Some(fields) = &ckpt.fields {
        for (i, f) in fields.iter().enumerate() {
            let p = dir.join("depth").join(format!("{i:06}.bin"));
            write_depth_bin(&p, &f.eval_depth())?;
            files.push(p);
        }
    }
    let last = ckpt.log.epochs.last();
    let summary = serde_json::json!({
        "phase": ckpt.phase,
        "epochs": ckpt.epoch,
        "finished": ckpt.finished,
        "final_loss": last.map(|r| r.loss),
        "mean_translation": last.map(|r| r.mean_translation),
    });
    ctx.stamp(&dir, &format!("train_{}", phase_dir_name(ckpt.phase)), &files, summary)?;
    Ok(ckpt)
}

fn cmd_train(ctx: &Context, args: &TrainArgs) -> Result<()> {
    if args.mode.is_some() != (args.stage == StageArg::Single) {
        return Err(Error::Config("--mode is required with --stage single and not allowed otherwise".into()));
    }
    let seq = ctx.sequence()?;
    let data = training_set(ctx, &seq, args.calibration.as_deref())?;
    let cfg = &ctx.cfg.train;
    let stage2 = |stage1: Checkpoint| -> Result<Checkpoint> {
        if !stage1.finished {
            return Err(Error::Config("stage 1 has not finished; resume it before stage 2".into()));
        }
        let s1 = stage1.into_result();
        run_phase(ctx, &data, args, || Checkpoint::start_stage2(&data, cfg, &s1))
    };
    match args.stage {
        StageArg::One => {
            run_phase(ctx, &data, args, || Checkpoint::start_stage1(&data, cfg))?;
        }
        StageArg::Two => {
            let init = match &args.init {
                Some(p) => p.clone(),
                None => ctx.out_dir()?.join("stage1").join("checkpoint.json"),
            };
            let s1 = Checkpoint::load(&init)?;
            if s1.phase != Phase::Stage1 {
                return Err(Error::Config(format!("{} is not a stage-1 checkpoint", init.display())));
            }
            stage2(s1)?;
        }
        StageArg::Both => {
            let s1 = run_phase(ctx, &data, args, || Checkpoint::start_stage1(&data, cfg))?;
            if s1.finished {
                stage2(s1)?;
            }
        }
        StageArg::Single => {
            let mode = match args.mode {
                Some(ModeArg::FixedSupervision) => AblationMode::FixedSupervision,
                _ => AblationMode::NoSupervision,
            };
            run_phase(ctx, &data, args, || Checkpoint::start_ablation(&data, cfg, mode))?;
        }
    }
    Ok(())
}

fn depth_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if matches!(p.extension().and_then(|e| e.to_str()), Some("bin" | "pgm")) {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::format(dir, "no depth files (.bin or .pgm)"));
    }
    Ok(out)
}

fn read_sparse(path: &Path) -> Result<SparseDepthImage> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_sparse_pgm(path),
        _ => Ok(SparseDepthImage::from_dense(&read_depth(path)?)),
    }
}

fn cmd_combine(ctx: &Context, reports: &[PathBuf]) -> Result<()> {
    let out = ctx.out_dir()?;
    let loaded = reports
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            EvalReport::from_json(&text).map_err(|e| Error::format(p, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut files = Vec::new();
    if loaded.iter().any(|r| r.odometry.is_some()) {
        let p = out.join("table_pose.csv");
        write_file(&p, pose_table_from_reports(&loaded)?.as_bytes())?;
        files.push(p);
    }
    if loaded.iter().any(|r| r.depth.is_some()) {
        let p = out.join("table_depth.csv");
        write_file(&p, depth_table_from_reports(&loaded).as_bytes())?;
        files.push(p);
    }
    let sequences: Vec<&str> = loaded.iter().map(|r| r.sequence.as_str()).collect();
    ctx.stamp(out, "eval_combine", &files, serde_json::json!({ "sequences": sequences }))
}

fn cmd_eval(ctx: &Context, args: &EvalArgs) -> Result<()> {
    if !args.combine.is_empty() {
        return cmd_combine(ctx, &args.combine);
    }
    let out = ctx.out_dir()?;
    let ecfg = &ctx.cfg.eval;
    let mut report = EvalReport::new(&ctx.cfg.sequence, ecfg);
    report.config_hash = Some(ctx.hash.clone());
    report.seed = Some(ctx.cfg.seed);
    let seq = if ctx.cfg.dataset.is_some() { Some(ctx.sequence()?) } else { None };

    let mut trajectories = None;
    if let Some(est) = &args.est {
        let est_path = if est.is_dir() { est.join("poses.txt") } else { est.clone() };
        let est = Trajectory::new(read_poses(&est_path)?);
        let gt = match (&args.gt, &seq) {
            (Some(p), _) => Trajectory::new(read_poses(p)?),
            (None, Some(s)) => Trajectory::new(s.gt_poses.clone().ok_or_else(|| {
                Error::format(&s.manifest.calibration, "dataset has no ground-truth poses; pass --gt")
            })?),
            (None, None) => return Err(Error::Config("--est needs --gt or --data".into())),
        };
        report.odometry = Some(evaluate_odometry(&est, &gt, ecfg)?);
        trajectories = Some((est, gt));
    }

    if let Some(dir) = &args.depth_dir {
        let preds = depth_files(dir)?.iter().map(|p| read_depth(p)).collect::<Result<Vec<_>>>()?;
        let gts: Vec<SparseDepthImage> = match (&args.depth_gt, &seq) {
            (Some(g), _) => depth_files(g)?.iter().map(|p| read_sparse(p)).collect::<Result<_>>()?,
            (None, Some(s)) => {
                let (w, h) = (preds[0].width, preds[0].height);
                (0..s.len()).map(|i| s.lidar_depth(i, w, h)).collect::<Result<_>>()?
            }
            (None, None) => return Err(Error::Config("--depth-dir needs --depth-gt or --data".into())),
        };
        if gts.len() != preds.len() {
            return Err(Error::format(dir, format!("{} depth maps for {} ground-truth frames", preds.len(), gts.len())));
        }
        let metrics = preds
            .iter()
            .zip(&gts)
            .map(|(p, g)| depth_metrics(p, g, ecfg.depth_cap))
            .collect::<Result<Vec<_>>>()?;
        report.depth = Some(mean_depth_metrics(&metrics)?);
        report.depth_frames = metrics.len();
        report.resolution = Some([preds[0].width, preds[0].height]);
        let ratios = preds
            .iter()
            .zip(&gts)
            .map(|(p, g)| estimate_scale(g, p, ctx.cfg.calibration.estimator, 1).map(|s| s.epsilon))
            .collect::<Result<Vec<_>>>()?;
        report.scale = scale_statistics(&ratios).ok();
    }
    if report.odometry.is_none() && report.depth.is_none() {
        return Err(Error::Config("nothing to evaluate: pass --est and/or --depth-dir".into()));
    }
    let (est, gt) = match &trajectories {
        Some((e, g)) => (Some(e), Some(g)),
        None => (None, None),
    };
    let paths = emit_report(&report, est, gt, out)?;
    let mut files = vec![paths.report];
    files.extend(paths.trajectory_csv);
    files.extend(paths.trajectory_svg);
    files.extend(paths.pose_table);
    files.extend(paths.depth_table);
    if est.is_some() && gt.is_some() {
        files.push(out.join("trajectory_gt.csv"));
    }
    ctx.stamp(out, "eval", &files, serde_json::to_value(&report)?)?;
    Ok(())
}

/// Inverse depth normalized to [0, 1] over the frame.
fn depth_image(d: &DepthMap) -> Image {
    let inv: Vec<f64> = d.data.iter().map(|z| if *z > 0.0 { 1.0 / z } else { 0.0 }).collect();
    let hi = inv.iter().copied().fold(0.0, f64::max);
    let scale = if hi > 0.0 { 1.0 / hi } else { 0.0 };
    Image::from_fn(d.width, d.height, |u, v| inv[v * d.width + u] * scale)
}

fn cmd_render(ctx: &Context, args: &RenderArgs) -> Result<()> {
    let seq = ctx.sequence()?;
    let i = args.frame;
    if i + 1 >= seq.len() {
        return Err(Error::Config(format!("frame {i} has no successor in a {}-frame sequence", seq.len())));
    }
    let depth = match &args.depth_dir {
        Some(dir) => {
            let files = depth_files(dir)?;
            let f = files
                .get(i)
                .ok_or_else(|| Error::format(dir, format!("no depth map for frame {i}")))?;
            read_depth(f)?
        }
        None => coarse_depths(ctx, &seq, None)?.swap_remove(i),
    };
    let poses = match &args.poses {
        Some(p) => read_poses(p)?,
        None => seq
            .gt_poses
            .clone()
            .ok_or_else(|| Error::Config("dataset has no ground-truth poses; pass --poses".into()))?,
    };
    if poses.len() < i + 2 {
        return Err(Error::Config(format!("{} poses do not cover frame {}", poses.len(), i + 1)));
    }
    let pair = poses[i + 1].inverse().compose(&poses[i]);
    let k = seq.intrinsics()?;
    let target = seq.image(i)?;
    let source = seq.image(i + 1)?;
    let s = synthesize(&source, &depth, &pair, &k);
    let ch = target.channels;
    let residual = Image {
        data: target
            .data
            .iter()
            .zip(&s.image.data)
            .enumerate()
            .map(|(j, (a, b))| if s.mask.valid[j / ch] { (a - b).abs() } else { 0.0 })
            .collect(),
        ..target.clone()
    };

    let dir = ctx.out_dir()?.join("render");
    let comment = ctx.comment();
    let name = |what: &str| dir.join(format!("{what}_{i:06}.pgm"));
    let files = vec![name("depth"), name("warp"), name("mask"), name("residual")];
    depth_image(&depth).write_pnm8(&files[0], Some(&comment))?;
    s.image.to_gray().write_pnm8(&files[1], Some(&comment))?;
    s.mask.to_image().write_pnm8(&files[2], Some(&comment))?;
    residual.to_gray().write_pnm8(&files[3], Some(&comment))?;
    let summary = serde_json::json!({ "frame": i, "valid_fraction": s.mask.valid_fraction() });
    ctx.stamp(&dir, &format!("render_{i:06}"), &files, summary)?;
    Ok(())
}

#[derive(Serialize)]
struct GradCheckOutput {
    config_hash: String,
    seed: u64,
    width: usize,
    height: usize,
    frames: usize,
    tolerance: GradCheckTolerance,
    reports: Vec<crate::trainer::GradCheckReport>,
    pass: bool,
}

fn cmd_gradcheck(ctx: &Context, args: &GradcheckArgs) -> Result<()> {
    let out = ctx.out_dir()?;
    let instance = GradCheckInstance::synthetic(args.width, args.height, args.frames, ctx.cfg.seed)?;
    let tol = GradCheckTolerance {
        seed: ctx.cfg.seed,
        corrupt: args.corrupt,
        ..GradCheckTolerance::default()
    };
    let selected = match args.loss {
        Some(l) => vec![l],
        None => LossSelector::ALL.to_vec(),
    };
    let reports = selected
        .iter()
        .map(|&l| gradient_check(l, &instance, &tol))
        .collect::<Result<Vec<_>>>()?;
    let pass = reports.iter().all(|r| r.pass);
    let output = GradCheckOutput {
        config_hash: ctx.hash.clone(),
        seed: ctx.cfg.seed,
        width: args.width,
        height: args.height,
        frames: args.frames,
        tolerance: tol,
        reports,
        pass,
    };
    let path = out.join("gradcheck.json");
    write_file(&path, serde_json::to_string_pretty(&output)?.as_bytes())?;
    ctx.stamp(out, "gradcheck", &[path], serde_json::json!({ "pass": pass }))?;
    for r in &output.reports {
        log::info!("{}: {}/{} within tolerance, max error {:.3e}", r.loss, r.passed, r.checked, r.max_relative_error);
    }
    if !pass {
        let failed: Vec<&str> = output.reports.iter().filter(|r| !r.pass).map(|r| r.loss.as_str()).collect();
        return Err(Error::GradientCheck(failed.join(", ")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::format("a", "b")), EXIT_DATA);
        let div = Error::Divergence {
            epoch: 3,
            loss: 10.0,
            initial: 0.1,
        };
        assert_eq!(exit_code(&div), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::DegenerateWindow), EXIT_NUMERIC);
    }

    #[test]
    fn stage_values_parse() {
        let c = Cli::try_parse_from(["metricvo", "train", "--stage", "single", "--mode", "no_supervision"]).unwrap();
        match c.command {
            Command::Train(a) => {
                assert_eq!(a.stage, StageArg::Single);
                assert_eq!(a.mode, Some(ModeArg::NoSupervision));
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["metricvo", "train", "--stage", "3"]).is_err());
        assert!(Cli::try_parse_from(["metricvo", "eval", "--align", "scale_only"]).is_ok());
    }
}
