use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{AblationMode, OptimizerState, Phase, TrainConfig, TrainLog, TrainResult, TrainingSet};
use crate::config::config_hash;
use crate::depthfield::DepthField;
use crate::error::{Error, Result};
use crate::geometry::{se3_log, Pose};
use crate::image::write_file;

pub const CHECKPOINT_VERSION: u32 = 1;

/// A pose as stored on disk: its twist for reading, and the exact 3×4
/// matrix the pose is restored from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub twist: Option<[f64; 6]>,
    pub matrix: [f64; 12],
}

fn save_poses<S: Serializer>(poses: &[Pose], s: S) -> std::result::Result<S::Ok, S::Error> {
    let records: Vec<PoseRecord> = poses
        .iter()
        .map(|p| PoseRecord {
            twist: se3_log(p).ok().map(|t| t.to_array()),
            matrix: p.to_row_major_3x4(),
        })
        .collect();
    records.serialize(s)
}

fn load_poses<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Pose>, D::Error> {
    let records = Vec::<PoseRecord>::deserialize(d)?;
    Ok(records.iter().map(|r| Pose::from_row_major_3x4(&r.matrix)).collect())
}

/// Complete optimizer state after some number of epochs of one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub phase: Phase,
    pub n_frames: usize,
    /// Epochs completed in this phase.
    pub epoch: usize,
    pub epoch_budget: usize,
    pub finished: bool,
    #[serde(serialize_with = "save_poses", deserialize_with = "load_poses")]
    pub poses: Vec<Pose>,
    pub fields: Option<Vec<DepthField>>,
    pub optimizer: OptimizerState,
    pub log: TrainLog,
}

impl Checkpoint {
    fn fresh(data: &TrainingSet, cfg: &TrainConfig, phase: Phase, budget: usize) -> Result<Self> {
        cfg.validate()?;
        data.validate(cfg)?;
        let n = data.len();
        Ok(Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash(cfg)?,
            phase,
            n_frames: n,
            epoch: 0,
            epoch_budget: budget,
            finished: false,
            poses: vec![Pose::identity(); n - 1],
            fields: None,
            optimizer: OptimizerState::new(n - 1, &[]),
            log: TrainLog::default(),
        })
    }

    fn with_fields(mut self, fields: Vec<DepthField>) -> Self {
        let sizes: Vec<usize> = fields.iter().map(DepthField::num_params).collect();
        self.optimizer = OptimizerState::new(self.poses.len(), &sizes);
        self.fields = Some(fields);
        self
    }

    /// Identity poses, fixed coarse depths.
    pub fn start_stage1(data: &TrainingSet, cfg: &TrainConfig) -> Result<Self> {
        Self::fresh(data, cfg, Phase::Stage1, cfg.stage1_epochs)
    }

    /// Stage-1 poses, depth fields fitted to the coarse depths, fresh moments.
    pub fn start_stage2(data: &TrainingSet, cfg: &TrainConfig, stage1: &TrainResult) -> Result<Self> {
        let budget = cfg.total_epochs.saturating_sub(stage1.epochs).max(1);
        let mut c = Self::fresh(data, cfg, Phase::Stage2, budget)?;
        if stage1.poses.len() != c.poses.len() {
            return Err(Error::Shape(format!(
                "stage-1 result has {} poses for {} frames",
                stage1.poses.len(),
                data.len()
            )));
        }
        c.poses = stage1.poses.clone();
        c.log = stage1.log.clone();
        let fields = data
            .coarse_depths
            .iter()
            .map(|d| DepthField::fit(d, cfg.depth_field))
            .collect::<Result<Vec<_>>>()?;
        Ok(c.with_fields(fields))
    }

    pub fn start_ablation(data: &TrainingSet, cfg: &TrainConfig, mode: AblationMode) -> Result<Self> {
        match mode {
            AblationMode::FixedSupervision => Self::fresh(data, cfg, Phase::FixedSupervision, cfg.total_epochs),
            AblationMode::NoSupervision => {
                let c = Self::fresh(data, cfg, Phase::NoSupervision, cfg.total_epochs)?;
                let k = &data.intrinsics;
                let fields = (0..data.len())
                    .map(|_| DepthField::new(k.width, k.height, cfg.depth_field))
                    .collect::<Result<Vec<_>>>()?;
                Ok(c.with_fields(fields))
            }
        }
    }

    pub(crate) fn check_compatible(&self, data: &TrainingSet, cfg: &TrainConfig) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", self.version)));
        }
        let hash = config_hash(cfg)?;
        if self.config_hash != hash {
            return Err(Error::Config(format!(
                "checkpoint was written with config {} but the current config is {hash}",
                self.config_hash
            )));
        }
        if self.n_frames != data.len() || self.poses.len() + 1 != data.len() {
            return Err(Error::Shape(format!(
                "checkpoint covers {} frames, data has {}",
                self.n_frames,
                data.len()
            )));
        }
        let learned = matches!(self.phase, Phase::Stage2 | Phase::NoSupervision);
        if learned != self.fields.is_some() {
            return Err(Error::Config(format!("checkpoint phase {:?} and depth fields disagree", self.phase)));
        }
        if !self.optimizer.is_finite() {
            return Err(Error::Config("checkpoint optimizer moments are not finite".into()));
        }
        Ok(())
    }

    pub fn into_result(self) -> TrainResult {
        TrainResult {
            poses: self.poses,
            fields: self.fields,
            log: self.log,
            epochs: self.epoch,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}
