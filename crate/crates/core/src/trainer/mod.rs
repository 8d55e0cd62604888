//! Two-stage optimization of relative poses and depth fields.
//!
//! Stage 1 fits the relative pose of every adjacent pair against the forward
//! window loss with the calibrated coarse depths held fixed, which transfers
//! their metric scale to the translations. Stage 2 refines poses together
//! with one [`DepthField`] per frame under the bi-directional loss; it never
//! sees LiDAR again, so scale survives only through the optimized state.
//!
//! All randomness comes from the configured seed: windows of epoch `e` in
//! stage `s` are drawn from a ChaCha stream keyed on `(seed, s, e)`, which
//! makes a run resumed from a checkpoint bit-identical to an uninterrupted
//! one.

mod adam;
mod checkpoint;
mod gradcheck;
mod schedule;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamBlock, AdamParams, OptimizerState};
pub use checkpoint::{Checkpoint, PoseRecord, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradient, gradient_check, GradCheckInstance, GradCheckReport, GradCheckTolerance, LossSelector};
pub use schedule::{epoch_windows, stage_switch, SwitchCriterion};

use crate::depthfield::{DepthField, DepthFieldConfig, DepthMap};
use crate::error::{Error, Result};
use crate::geometry::{se3_exp, CameraIntrinsics, Pose, Twist};
use crate::image::Image;
use crate::losses::{forward_window_loss, refine_loss, DepthSource, LossBundle, LossOptions, WindowView};
use crate::numeric::{mean, tree_sum};

/// Divergence guard: abort when the epoch loss stays above `factor` times
/// the first epoch's loss for `patience` consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DivergenceRule {
    pub factor: f64,
    pub patience: usize,
}

impl Default for DivergenceRule {
    fn default() -> Self {
        DivergenceRule {
            factor: 10.0,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Frames per optimization window.
    pub window_length: usize,
    pub stage1_lr: f64,
    pub stage2_lr: f64,
    /// Multiplier on the learning rate of the rotational twist coordinates.
    pub rotation_lr_scale: f64,
    /// Multiplier on the learning rate of depth-field parameters.
    pub depth_lr_scale: f64,
    pub adam: AdamParams,
    /// Upper bound on stage-1 epochs.
    pub stage1_epochs: usize,
    /// Stage 1 and stage 2 together.
    pub total_epochs: usize,
    pub sequences_per_epoch: usize,
    pub seed: u64,
    pub loss: LossOptions,
    pub switch: SwitchCriterion,
    pub depth_field: DepthFieldConfig,
    pub divergence: DivergenceRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            window_length: 5,
            stage1_lr: 1e-4,
            stage2_lr: 1e-5,
            rotation_lr_scale: 1.0,
            depth_lr_scale: 1.0,
            adam: AdamParams::default(),
            stage1_epochs: 100,
            total_epochs: 200,
            sequences_per_epoch: 1000,
            seed: 0,
            loss: LossOptions::default(),
            switch: SwitchCriterion::default(),
            depth_field: DepthFieldConfig::default(),
            divergence: DivergenceRule::default(),
        }
    }
}

impl TrainConfig {
    /// Small-scale preset for the 20-frame synthetic sequences.
    ///
    /// Poses and depths are optimized directly rather than through network
    /// weights, so the learning rates are larger than the defaults while
    /// keeping the 10:1 ratio between the stages.
    pub fn desk() -> Self {
        TrainConfig {
            stage1_lr: 5e-3,
            stage2_lr: 5e-4,
            rotation_lr_scale: 0.1,
            stage1_epochs: 40,
            total_epochs: 60,
            sequences_per_epoch: 50,
            switch: SwitchCriterion {
                min_epochs: 10,
                ..SwitchCriterion::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.window_length < 2 {
            return bad(format!("window_length must be at least 2, got {}", self.window_length));
        }
        for (name, lr) in [
            ("stage1_lr", self.stage1_lr),
            ("stage2_lr", self.stage2_lr),
            ("rotation_lr_scale", self.rotation_lr_scale),
            ("depth_lr_scale", self.depth_lr_scale),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if self.sequences_per_epoch == 0 || self.total_epochs == 0 || self.stage1_epochs == 0 {
            return bad("epoch and sequence counts must be positive".into());
        }
        if self.stage1_epochs >= self.total_epochs {
            return bad(format!(
                "stage1_epochs ({}) must be below total_epochs ({})",
                self.stage1_epochs, self.total_epochs
            ));
        }
        if !(0.0..=1.0).contains(&self.loss.min_valid_fraction) {
            return bad("min_valid_fraction must lie in [0, 1]".into());
        }
        if !(self.divergence.factor > 1.0) || self.divergence.patience == 0 {
            return bad("divergence factor must exceed 1 with positive patience".into());
        }
        self.adam.validate()?;
        self.loss.weights.validate()?;
        self.switch.validate()?;
        self.depth_field.validate()
    }

    fn pose_lr_scale(&self) -> [f64; 6] {
        let r = self.rotation_lr_scale;
        [1.0, 1.0, 1.0, r, r, r]
    }
}

/// Everything the optimizer sees of a sequence: images and the calibrated
/// coarse depths. LiDAR is deliberately absent.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub intrinsics: CameraIntrinsics,
    pub images: Vec<Image>,
    pub coarse_depths: Vec<DepthMap>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn validate(&self, cfg: &TrainConfig) -> Result<()> {
        let k = &self.intrinsics;
        if self.images.len() < cfg.window_length {
            return Err(Error::Shape(format!(
                "{} frames is shorter than the window length {}",
                self.images.len(),
                cfg.window_length
            )));
        }
        if self.coarse_depths.len() != self.images.len() {
            return Err(Error::Shape(format!(
                "{} coarse depths for {} images",
                self.coarse_depths.len(),
                self.images.len()
            )));
        }
        for (i, img) in self.images.iter().enumerate() {
            if (img.width, img.height) != (k.width, k.height) {
                return Err(Error::Shape(format!("image {i} is {}x{}", img.width, img.height)));
            }
        }
        for (i, d) in self.coarse_depths.iter().enumerate() {
            if (d.width, d.height) != (k.width, k.height) || !d.is_valid() {
                return Err(Error::Shape(format!("coarse depth {i} has the wrong shape or non-positive values")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Poses optimized under the bi-directional loss with the coarse depths
    /// held fixed for the whole run.
    FixedSupervision,
    /// Poses and depth fields optimized from scratch, without calibration.
    NoSupervision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Stage1,
    Stage2,
    FixedSupervision,
    NoSupervision,
}

impl Phase {
    fn stream(self) -> u64 {
        match self {
            Phase::Stage1 => 1,
            Phase::Stage2 => 2,
            Phase::FixedSupervision => 3,
            Phase::NoSupervision => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    /// Mean window loss over the epoch, evaluated before each step.
    pub loss: f64,
    /// Mean translation norm over all pairs at the end of the epoch.
    pub mean_translation: f64,
    pub valid_fraction: f64,
    pub windows: usize,
    pub degenerate_windows: usize,
    pub rejected_steps: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &EpochRecord> {
        self.epochs.iter().filter(move |r| r.phase == phase)
    }

    pub fn losses(&self, phase: Phase) -> Vec<f64> {
        self.phase(phase).map(|r| r.loss).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    /// Pose of each adjacent pair (camera i → camera i+1).
    pub poses: Vec<Pose>,
    pub fields: Option<Vec<DepthField>>,
    pub log: TrainLog,
    /// Epochs run in the final phase.
    pub epochs: usize,
}

impl TrainResult {
    /// Depth maps of the learned fields.
    pub fn depths(&self) -> Option<Vec<DepthMap>> {
        self.fields.as_ref().map(|f| f.iter().map(DepthField::eval_depth).collect())
    }
}

fn mean_translation(poses: &[Pose]) -> f64 {
    mean(&poses.iter().map(|p| p.translation.norm()).collect::<Vec<_>>())
}

enum Objective {
    Coarse,
    RefineFixed,
    RefineLearned,
}

fn objective(phase: Phase) -> Objective {
    match phase {
        Phase::Stage1 => Objective::Coarse,
        Phase::FixedSupervision => Objective::RefineFixed,
        Phase::Stage2 | Phase::NoSupervision => Objective::RefineLearned,
    }
}

fn learning_rate(cfg: &TrainConfig, phase: Phase) -> f64 {
    match phase {
        Phase::Stage2 => cfg.stage2_lr,
        _ => cfg.stage1_lr,
    }
}

fn window_loss(data: &TrainingSet, ckpt: &Checkpoint, cfg: &TrainConfig, start: usize) -> Result<LossBundle> {
    let n = cfg.window_length;
    let view = WindowView {
        intrinsics: &data.intrinsics,
        images: data.images[start..start + n].iter().collect(),
        poses: ckpt.poses[start..start + n - 1].to_vec(),
    };
    let coarse = &data.coarse_depths[start..start + n];
    match objective(ckpt.phase) {
        Objective::Coarse => forward_window_loss(&view, DepthSource::Fixed(coarse), &cfg.loss),
        Objective::RefineFixed => refine_loss(&view, DepthSource::Fixed(coarse), &cfg.loss),
        Objective::RefineLearned => {
            let fields = ckpt.fields.as_ref().expect("learned phase without depth fields");
            refine_loss(&view, DepthSource::Learned(&fields[start..start + n]), &cfg.loss)
        }
    }
}

fn apply_step(ckpt: &mut Checkpoint, cfg: &TrainConfig, start: usize, bundle: &LossBundle) {
    let lr = learning_rate(cfg, ckpt.phase);
    let pose_scale = cfg.pose_lr_scale();
    for (j, g) in bundle.grad_pose.iter().enumerate() {
        let i = start + j;
        let inc = ckpt.optimizer.poses[i]
            .increment(g.0.as_slice(), lr, &pose_scale, &cfg.adam)
            .expect("finite gradients were checked");
        let delta = Twist::from_array(inc.try_into().expect("six coordinates"));
        ckpt.poses[i] = se3_exp(&delta).compose(&ckpt.poses[i]);
    }
    if let Some(fields) = ckpt.fields.as_mut() {
        let depth_lr = lr * cfg.depth_lr_scale;
        for (j, g) in bundle.grad_depth.iter().enumerate() {
            let f = &mut fields[start + j];
            adam_step(&mut ckpt.optimizer.depth[start + j], &mut f.params, g, depth_lr, &cfg.adam);
        }
    }
}

/// Runs one epoch of the checkpoint's phase and appends its record.
fn run_epoch(data: &TrainingSet, cfg: &TrainConfig, ckpt: &mut Checkpoint) -> Result<()> {
    let starts = epoch_windows(cfg, data.len(), ckpt.phase.stream(), ckpt.epoch);
    let mut losses = Vec::with_capacity(starts.len());
    let mut fractions = Vec::with_capacity(starts.len());
    let mut degenerate = 0;
    let mut rejected = 0;
    for start in starts {
        let bundle = match window_loss(data, ckpt, cfg, start) {
            Ok(b) => b,
            Err(Error::DegenerateWindow) => {
                log::debug!("epoch {}: window at {start} is degenerate, skipped", ckpt.epoch);
                degenerate += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if !bundle.is_finite() {
            log::warn!("epoch {}: non-finite loss or gradient at window {start}, step rejected", ckpt.epoch);
            rejected += 1;
            continue;
        }
        losses.push(bundle.value);
        fractions.push(bundle.valid_fraction);
        apply_step(ckpt, cfg, start, &bundle);
    }
    ckpt.optimizer.rejected_steps += rejected;
    if losses.is_empty() {
        return Err(Error::DegenerateWindow);
    }
    let record = EpochRecord {
        phase: ckpt.phase,
        epoch: ckpt.epoch,
        loss: tree_sum(&losses) / losses.len() as f64,
        mean_translation: mean_translation(&ckpt.poses),
        valid_fraction: tree_sum(&fractions) / fractions.len() as f64,
        windows: losses.len(),
        degenerate_windows: degenerate,
        rejected_steps: rejected,
    };
    log::info!(
        "{:?} epoch {}: loss {:.6e} mean |t| {:.4} valid {:.3}",
        record.phase,
        record.epoch,
        record.loss,
        record.mean_translation,
        record.valid_fraction
    );
    ckpt.log.epochs.push(record);
    ckpt.epoch += 1;
    Ok(())
}

fn check_divergence(cfg: &TrainConfig, ckpt: &Checkpoint) -> Result<()> {
    let losses = ckpt.log.losses(ckpt.phase);
    let Some(&initial) = losses.first() else {
        return Ok(());
    };
    let p = cfg.divergence.patience;
    if losses.len() >= p && losses[losses.len() - p..].iter().all(|&l| l > cfg.divergence.factor * initial) {
        let loss = *losses.last().unwrap();
        return Err(Error::Divergence {
            epoch: ckpt.epoch - 1,
            loss,
            initial,
        });
    }
    Ok(())
}

/// Continues the checkpoint's phase until it finishes or `stop_after` more
/// epochs have run. `on_epoch` sees the checkpoint after every epoch.
pub fn train(
    data: &TrainingSet,
    cfg: &TrainConfig,
    ckpt: &mut Checkpoint,
    stop_after: Option<usize>,
    mut on_epoch: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    data.validate(cfg)?;
    ckpt.check_compatible(data, cfg)?;
    let mut ran = 0;
    while !ckpt.finished {
        if stop_after.is_some_and(|s| ran >= s) {
            break;
        }
        run_epoch(data, cfg, ckpt)?;
        ran += 1;
        check_divergence(cfg, ckpt)?;
        ckpt.finished = ckpt.epoch >= ckpt.epoch_budget
            || (ckpt.phase == Phase::Stage1 && {
                let history: Vec<f64> = ckpt.log.phase(Phase::Stage1).map(|r| r.mean_translation).collect();
                stage_switch(&cfg.switch, &history)
            });
        on_epoch(ckpt)?;
    }
    Ok(())
}

/// Coarse pose recovery: forward loss over pose twists with fixed coarse depths.
pub fn run_stage1(data: &TrainingSet, cfg: &TrainConfig) -> Result<TrainResult> {
    let mut ckpt = Checkpoint::start_stage1(data, cfg)?;
    train(data, cfg, &mut ckpt, None, |_| Ok(()))?;
    Ok(ckpt.into_result())
}

/// Bi-directional refinement from stage-1 poses, with depth fields fitted to
/// the coarse depths.
pub fn run_stage2(data: &TrainingSet, cfg: &TrainConfig, stage1: &TrainResult) -> Result<TrainResult> {
    let mut ckpt = Checkpoint::start_stage2(data, cfg, stage1)?;
    train(data, cfg, &mut ckpt, None, |_| Ok(()))?;
    Ok(ckpt.into_result())
}

/// Stage 1 followed by stage 2.
pub fn run_two_stage(data: &TrainingSet, cfg: &TrainConfig) -> Result<TrainResult> {
    let s1 = run_stage1(data, cfg)?;
    run_stage2(data, cfg, &s1)
}

/// One stage for the whole epoch budget at the stage-1 learning rate.
pub fn run_single_stage_ablation(data: &TrainingSet, cfg: &TrainConfig, mode: AblationMode) -> Result<TrainResult> {
    let mut ckpt = Checkpoint::start_ablation(data, cfg, mode)?;
    train(data, cfg, &mut ckpt, None, |_| Ok(()))?;
    Ok(ckpt.into_result())
}
