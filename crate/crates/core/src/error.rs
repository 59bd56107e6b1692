use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumodError {
    #[error("directory not found: {0}")]
    MissingDirectory(PathBuf),
    #[error("no files in {dir} match pattern `{pattern}`")]
    NoMatches { dir: PathBuf, pattern: String },
    #[error("invalid glob pattern `{0}`")]
    BadPattern(String),
    #[error("{file}: dimensions {found:?} differ from {expected:?} of the first frame")]
    InconsistentDimensions {
        file: PathBuf,
        expected: (u32, u32, usize),
        found: (u32, u32, usize),
    },
    #[error("{file}: cannot decode image: {reason}")]
    Decode { file: PathBuf, reason: String },
    #[error("{file}: cannot write image: {reason}")]
    Write { file: PathBuf, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("expected an RGB frame, got {0} channel(s)")]
    NotRgb(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("online mode requires pretrained networks")]
    NotPretrained,
    #[error("no evaluable frames: every frame has empty ground truth and empty prediction")]
    NoEvaluableFrames,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = NumodError> = std::result::Result<T, E>;
