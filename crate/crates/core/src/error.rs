use std::path::PathBuf;

use thiserror::Error;

use crate::month::YearMonth;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed store {path}: {detail}")]
    MalformedStore { path: PathBuf, detail: String },

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("duplicate article id {0:?}")]
    DuplicateId(String),

    #[error("non-finite coordinate in article {id:?} at component {component}")]
    NonFiniteCoordinate { id: String, component: usize },

    #[error("zero vector cannot be normalized")]
    ZeroVector,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("predictions file {path}, line {line}: {detail}")]
    PredictionsFormat {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("predictor failed at cutoff {cutoff}: {detail}")]
    Predictor { cutoff: YearMonth, detail: String },

    #[error("no cutoff in the requested range could be evaluated")]
    NoValidCutoffs,

    #[error("reports are not comparable: {0}")]
    Incomparable(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
