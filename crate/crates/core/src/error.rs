use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("line {line}: unknown label `{value}` (expected 0-5)")]
    UnknownLabel { line: usize, value: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: malformed value `{value}` in column `{column}`")]
    MalformedRow {
        line: usize,
        column: String,
        value: String,
    },
    #[error("dataset contains no samples")]
    EmptyDataset,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("both classes must be present")]
    SingleClass,
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("need at least two non-empty clusters")]
    TooFewClusters,
    #[error("value outside [0, 1] at row {row}, column {col}")]
    OutOfUnitRange { row: usize, col: usize },
    #[error("weight shapes differ between networks")]
    ShapeMismatch,
    #[error("malformed weight snapshot: {0}")]
    Snapshot(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Self::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Self::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
