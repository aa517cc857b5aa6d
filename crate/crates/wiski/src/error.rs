//! Error type shared across the crate.

/// Errors surfaced by the numeric core and the experiment drivers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("snapshot format: {0}")]
    SnapshotFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { expected, got }
    }
}
