use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the forecasting pipeline.
///
/// Variants are grouped so the command-line front end can map them onto
/// stable exit codes (see [`Error::kind`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("duplicate row for unit `{unit}` at month {month}")]
    DuplicateKey { unit: String, month: i64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("unknown covariate column `{0}`")]
    UnknownCovariate(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("model error: {0}")]
    Model(String),

    #[error("unfittable outcome model: {0}")]
    Unfittable(String),

    #[error("{path}: {source}")]
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

/// Coarse error category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    Model,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidParameter { .. } => ErrorKind::Validation,
            Error::DimensionMismatch { .. } | Error::Model(_) | Error::Unfittable(_) => {
                ErrorKind::Model
            }
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
