//! Crate-wide error type.

/// Errors raised by tensor ops, model construction, metrics, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty point cloud: {0}")]
    EmptyCloud(String),

    #[error("cloud sizes differ ({left} vs {right}); the assignment metric needs equal sizes — resample one cloud first")]
    SizeMismatch { left: usize, right: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("assignment solver did not converge: {0}")]
    Convergence(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
