use std::path::PathBuf;

use thiserror::Error;

use crate::xform::TransformKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate example id `{0}`")]
    DuplicateId(String),

    #[error("row {row}: unknown label `{label}`")]
    UnknownLabel { row: usize, label: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate output: {0}")]
    DegenerateOutput(String),

    #[error("transform {kind} unsupported: {reason}")]
    UnsupportedTransform { kind: TransformKind, reason: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("prediction alignment error: {0}")]
    Alignment(String),

    #[error("no prediction for id `{0}`")]
    MissingPrediction(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("provider contract violated: {0}")]
    Contract(String),

    #[error("provider capability missing: {0}")]
    Capability(String),

    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Provider,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => ErrorClass::Usage,
            Error::MissingPrediction(_)
            | Error::Transport(_)
            | Error::Contract(_)
            | Error::Capability(_) => ErrorClass::Provider,
            _ => ErrorClass::Data,
        }
    }
}
