use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite field{}", .0.as_deref().map(|n| format!(" {n}")).unwrap_or_default())]
    NonFinite(Option<String>),

    #[error("ghost layer not filled")]
    GhostsNotFilled,

    #[error("missing boundary condition on {0} side")]
    MissingBoundary(&'static str),

    #[error("invalid boundary condition: {0}")]
    InvalidBoundary(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("solver failure ({method}): relative residual {residual:.3e} after {iterations} iterations ({reason})")]
    Solver {
        method: &'static str,
        residual: f64,
        iterations: usize,
        reason: String,
    },

    #[error("blow-up at t = {t}: non-finite values in {field}")]
    BlowUp { t: f64, field: String },

    #[error("derived fields are stale; refresh the state first")]
    StaleCache,

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
