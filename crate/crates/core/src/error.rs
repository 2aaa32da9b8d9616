//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A feature, pyramid or gram-bank file does not match the binary format.
    /// Carries the offending path and the byte offset of the first bad byte.
    #[error("{path}: {reason} (byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Too few frames for the requested pyramid depth.
    #[error("{0}; use fewer levels")]
    Granularity(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A Gram matrix with zero trace cannot be normalized.
    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    /// A training problem that no SVM can be fit on (e.g. a single-class label set).
    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    /// Kernel matrix violates positive semi-definiteness beyond tolerance.
    #[error("kernel matrix is not positive semi-definite: {0}")]
    NotPsd(String),

    #[error("manifest: {0}")]
    Manifest(String),

    /// An iterative solver stopped making progress before reaching its target.
    #[error("solver stalled: {0}")]
    SolverStall(String),

    #[error("linear program is infeasible: {0}")]
    Infeasible(String),

    #[error("fusion inputs disagree: {0}")]
    FusionMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            reason: reason.into(),
        }
    }
}
