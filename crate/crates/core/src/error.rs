use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

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

    #[error("non-numeric cell at row {row}, column '{column}': {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("column not found: {0}")]
    MissingColumn(String),

    #[error("constant column '{0}' cannot be standardized")]
    ConstantColumn(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("system is singular or ill-conditioned (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("zero sampling probability for row {0}")]
    ZeroProbability(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("subsample size {r} exceeds training size {n}")]
    SubsampleTooLarge { r: usize, n: usize },

    #[error("strategy {0} is deterministic and has no probabilities to draw from")]
    DeterministicPlan(String),

    #[error("unknown strategy '{0}'")]
    UnknownStrategy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
