use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("layout mismatch: {0}")]
    Layout(String),

    /// A numeric routine could not reach the requested tolerance.
    #[error("accuracy error: estimated error {estimated:.3e} exceeds tolerance {tolerance:.3e}")]
    Accuracy { estimated: f64, tolerance: f64 },

    #[error("non-finite value produced in {op}")]
    NonFinite { op: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("corrupt data in {path}: {message}")]
    Corrupt { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn layout(msg: impl Into<String>) -> Self {
        Error::Layout(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
