use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("malformed data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("rank-deficient matrix: {0}")]
    RankDeficient(String),

    #[error("vertex {0} has zero degree")]
    IsolatedVertex(usize),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::DimensionMismatch(_) => ErrorKind::Usage,
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } | Error::Json(_) => {
                ErrorKind::Data
            }
            Error::Asymmetric(_)
            | Error::RankDeficient(_)
            | Error::IsolatedVertex(_)
            | Error::NonFinite(_)
            | Error::Numerical(_) => ErrorKind::Numerical,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
