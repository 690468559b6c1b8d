use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("index {index} out of range for extent {extent} in {what}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        extent: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("backward called on an untracked root")]
    UntrackedRoot,

    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("modality mismatch: {0}")]
    Modality(String),

    #[error("unknown token or specifier: {0}")]
    UnknownToken(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("shape conflict for tensor `{name}`: expected {expected:?}, found {found:?}")]
    TensorShapeConflict {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing file {}: {what}", path.display())]
    MissingFile { path: PathBuf, what: String },

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
