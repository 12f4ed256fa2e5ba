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
    #[error("target column `{0}` not found")]
    MissingTarget(String),
    #[error("column `{column}` is not numeric (row {row}: `{value}`)")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },
    #[error("no rows left after dropping missing values")]
    EmptyDataset,
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("feature count mismatch: model expects {expected}, got {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("coordinate descent did not converge after {sweeps} sweeps (max change {achieved:e})")]
    NotConverged { sweeps: usize, achieved: f64 },
    #[error("tree is not a symmetric tree of depth 1 or 2")]
    NotBasisExpandable,
    #[error("all tuning candidates failed: {0}")]
    TuningFailed(String),
    #[error("unsupported model file format version {0}")]
    UnsupportedFormat(u32),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
