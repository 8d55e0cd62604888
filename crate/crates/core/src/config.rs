//! Run configuration shared by the command line subcommands.
//!
//! Configs are strict JSON: unknown keys are rejected, missing keys take
//! their defaults. A run is identified by the SHA-256 of its resolved config
//! serialized with sorted keys. The dataset and output locations are not
//! part of the hash: moving a run does not change its identity.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::scale::Estimator;
use crate::synth::SceneSpec;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub estimator: Estimator,
    /// Minimum LiDAR-covered pixels per frame.
    pub min_valid: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            estimator: Estimator::Median,
            min_valid: crate::scale::DEFAULT_MIN_VALID,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; copied into the scene and training seeds on resolution.
    pub seed: u64,
    pub scene: SceneSpec,
    pub calibration: CalibrationConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Dataset root in the KITTI layout (see [`crate::dataio`]).
    pub dataset: Option<PathBuf>,
    pub sequence: String,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    /// Desk-scale defaults ([`TrainConfig::desk`]).
    fn default() -> Self {
        RunConfig {
            seed: 0,
            scene: SceneSpec::default(),
            calibration: CalibrationConfig::default(),
            train: TrainConfig::desk(),
            eval: EvalConfig::default(),
            dataset: None,
            sequence: "00".into(),
            output: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the master seed and validates every section.
    pub fn resolved(mut self) -> Result<Self> {
        self.scene.seed = self.seed;
        self.train.seed = self.seed;
        self.scene.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate()?;
        self.eval.validate()?;
        if self.sequence.is_empty() || self.sequence.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid sequence id {:?}", self.sequence)));
        }
        if self.calibration.min_valid == 0 {
            return Err(Error::Config("calibration.min_valid must be positive".into()));
        }
        Ok(self)
    }

    pub fn hash(&self) -> Result<String> {
        config_hash(&self.identity())
    }

    /// The config with its locations cleared; this is what the hash covers.
    pub fn identity(&self) -> RunConfig {
        RunConfig {
            dataset: None,
            output: None,
            ..self.clone()
        }
    }
}

/// Hex SHA-256 of `value` serialized as JSON with sorted keys.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    // Going through `Value` sorts object keys.
    let canonical = serde_json::to_vec(&serde_json::to_value(value)?)?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}
