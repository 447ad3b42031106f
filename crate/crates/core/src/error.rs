use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("patch {index} has a zero-norm feature vector")]
    DegenerateFeature { index: usize },

    #[error("node {index} has zero degree")]
    IsolatedNode { index: usize },

    #[error("graph with {n} nodes exceeds the exhaustive-search limit of {max}")]
    SizeLimit { n: usize, max: usize },

    #[error("partition side has zero volume")]
    DegeneratePartition,

    #[error("graph is disconnected; the spectral cut is ambiguous")]
    AmbiguousCut,

    #[error("mask has no foreground cells")]
    EmptyMask,

    #[error("pooling region is empty or outside the grid")]
    EmptyRegion,

    #[error("division by zero in {0}")]
    ZeroDivision(&'static str),

    #[error("item area {area} exceeds buffer capacity {capacity}")]
    Oversize { area: usize, capacity: usize },

    #[error("memory buffer is empty")]
    EmptyBuffer,

    #[error("task exhausted")]
    EndOfTask,

    #[error("invalid configuration at {path}: {message}")]
    Config { path: String, message: String },

    #[error("{}: malformed input at byte {offset}: {message}", file.display())]
    Format {
        file: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("run aborted at step {step}: {source}")]
    RunAborted {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
