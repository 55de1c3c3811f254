use thiserror::Error;

/// Errors shared across the simulator, graph builder, models and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A computation produced NaN or infinity where a finite value was required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Autoregressive rollout or integration blew up at a known step.
    #[error("diverged at step {step}")]
    Diverged { step: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    /// Malformed, truncated or version-incompatible file.
    #[error("format error: {0}")]
    Format(String),

    /// Dataset and model disagree (e.g. charges present for a gravity model).
    #[error("data/model mismatch: {0}")]
    DataMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
