use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Operand shapes do not line up.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A NaN or infinity was produced or supplied.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Invalid optimizer/experiment configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A backward pass was attempted with a tape that no longer matches the model.
    #[error("stale tape: recorded at model version {tape}, model is at {model}")]
    StaleTape { tape: u64, model: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
