use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("numeric failure in {op}: {detail}")]
    Numeric { op: &'static str, detail: String },

    /// Iterative routine gave up; `best` is the last estimate it had.
    #[error("{op} did not converge after {iterations} iterations (best estimate {best:e})")]
    Convergence {
        op: &'static str,
        iterations: usize,
        best: f64,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("sequence length {len} exceeds positional capacity {capacity}")]
    Capacity { len: usize, capacity: usize },

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config validation failed: {0}")]
    ConfigValidation(String),

    #[error("checkpoint {path} is corrupt: {detail}")]
    Corrupt { path: PathBuf, detail: String },

    #[error("checkpoint format version {found} is not supported (expected {expected}); re-save it with a matching build")]
    Version { found: u32, expected: u32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
