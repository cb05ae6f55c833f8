use thiserror::Error;

/// Errors raised by the transmission, poisoning, and defense pipelines.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Shape or architecture mismatch between an input and a configured component.
    #[error("configuration error: {0}")]
    Config(String),

    /// Numerically degenerate input (zero vector where a direction is needed, etc).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Training produced a non-finite loss.
    #[error("divergence at epoch {epoch}, step {step}: {detail}")]
    Divergence {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Checkpoint or artifact could not be decoded.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
