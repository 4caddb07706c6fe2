use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants fall into three families that the CLI maps onto exit codes:
/// validation (bad arguments or shapes), I/O (files and formats) and
/// numerical (non-convergence, non-finite values).
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image header: {0}")]
    CorruptHeader(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("feature file magic mismatch: expected \"LAFM\", found {0:?}")]
    MagicMismatch([u8; 4]),

    #[error("feature file truncated: {0}")]
    Truncated(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("image too small: {0}")]
    TooSmall(String),

    #[error("no input: {0}")]
    EmptyInput(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("did not converge after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotFound(_)
            | Error::UnsupportedFormat(_)
            | Error::CorruptHeader(_)
            | Error::Io { .. }
            | Error::MagicMismatch(_)
            | Error::Truncated(_)
            | Error::Manifest(_) => ErrorKind::Io,
            Error::NonFinite(_) | Error::NoConvergence { .. } => ErrorKind::Numerical,
            Error::DimensionMismatch(_)
            | Error::InvalidParameter { .. }
            | Error::TooSmall(_)
            | Error::EmptyInput(_) => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
