use thiserror::Error;

/// Error type shared by all engine operations.
#[derive(Debug, Error)]
pub enum LdsError {
    /// Inputs disagree structurally (mismatched alphabets, bad shapes,
    /// unknown labels, empty collections).
    #[error("structural error: {0}")]
    Structural(String),

    /// A value lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative routine failed to converge; the message carries
    /// diagnostics (iteration count, residual).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An exact computation would exceed its size cap; the message names the
    /// Monte-Carlo fallback.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Missing or inconsistent configuration (e.g. generalization quantities
    /// requested without a designated optimal density).
    #[error("configuration error: {0}")]
    Config(String),

    /// The inference itself is ill-posed on the given data (e.g. all
    /// posterior mass vanishes).
    #[error("inference error: {0}")]
    Inference(String),
}

pub type Result<T> = std::result::Result<T, LdsError>;
