use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Rotation angle too close to π for a unique logarithm.
    #[error("se3 log undefined: rotation angle {angle} is within {margin} of pi")]
    LogDomain { angle: f64, margin: f64 },

    #[error("invalid camera intrinsics: {0}")]
    Intrinsics(String),

    #[error("invalid calibration: {0}")]
    Calibration(String),

    /// Not enough LiDAR-covered pixels to estimate a depth scale.
    #[error("scale calibration needs at least {required} valid pixels, found {n_valid}")]
    TooFewValid { n_valid: usize, required: usize },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid synthetic scene: {0}")]
    Scene(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("every pair in the window is degenerate (valid fraction below threshold)")]
    DegenerateWindow,

    #[error("optimization diverged at epoch {epoch}: loss {loss} vs initial {initial}")]
    Divergence { epoch: usize, loss: f64, initial: f64 },

    #[error("gradient check failed: {0}")]
    GradientCheck(String),

    #[error("timestamp association failed: {0}")]
    Alignment(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    /// A binary file whose length is not consistent with its record layout.
    #[error("{path}: size {size} bytes is not a multiple of the {record}-byte record size")]
    RecordSize {
        path: PathBuf,
        size: u64,
        record: u64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable category used by the command line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Json(_) => "config",
            Error::Divergence { .. } => "divergence",
            Error::DegenerateWindow | Error::LogDomain { .. } | Error::GradientCheck(_) => "numeric",
            _ => "data",
        }
    }
}
