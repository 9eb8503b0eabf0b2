use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the evaluation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("input is empty")]
    Empty,

    #[error("need at least {required} values, got {actual}")]
    TooShort { required: usize, actual: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("x values must be strictly increasing (index {0})")]
    NotIncreasing(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported activation `{0}` for this operation")]
    UnsupportedActivation(String),

    #[error("explainer `{0}` is stochastic; a deterministic explainer is required")]
    StochasticExplainer(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}: row {row}, column `{column}`: {message}", path.display())]
    MalformedCell {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
