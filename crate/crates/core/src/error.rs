use thiserror::Error;

/// Errors raised by the simulation engine.
///
/// The variants map onto the failure classes the CLI distinguishes:
/// configuration/usage problems are validation failures, while
/// [`Error::Integration`] signals a numerical breakdown at run time.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Block structure or vector lengths do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A value violates a documented invariant.
    #[error("invalid value: {0}")]
    Invalid(String),
    /// Operation called in a mode it does not support (e.g. white-noise
    /// sampling on an OU spec) or with a step that breaks its preconditions.
    #[error("usage error: {0}")]
    Usage(String),
    /// Not enough samples to compute the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Numerical integration produced non-finite values or lost unitarity.
    #[error("integration failure: {0}")]
    Integration(String),
}

impl Error {
    /// True for failures that originate in the numerics rather than the inputs.
    pub fn is_integration_failure(&self) -> bool {
        matches!(self, Error::Integration(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
