use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}: {defect}")]
    MalformedRow { row: usize, defect: String },

    #[error("malformed header: expected `emotion,pixels,Usage`, got `{0}`")]
    MalformedHeader(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid label index {0} (expected 0..=6)")]
    InvalidLabel(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("class {class} has {count} samples, fewer than the {partitions} partitions")]
    ClassTooSmall {
        class: &'static str,
        count: usize,
        partitions: usize,
    },

    #[error("{0} partition empty")]
    EmptyPartition(&'static str),

    #[error("class {0} has zero samples; inverse-frequency weight undefined")]
    ZeroCountClass(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("epoch {epoch} out of range for max_epochs {max_epochs}")]
    EpochOutOfRange { epoch: usize, max_epochs: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr:e})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },

    #[error(
        "pretrained backbone weights not found at {path}: place an exported backbone \
         there (a directory holding model.json and params/, e.g. the `checkpoint/` \
         directory of an earlier run) or set weights_source = \"random\""
    )]
    MissingPretrainedWeights { path: PathBuf },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

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
}
