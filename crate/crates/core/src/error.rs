use thiserror::Error;

use crate::sampler::ChainOutput;

/// Errors raised by models, estimators and samplers.
#[derive(Debug, Error)]
pub enum HulaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parameter outside model domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("model does not factorize over observations; subsampling is unsupported")]
    FactorizationUnsupported,

    #[error("latent utilities of observation {observation} violate the outcome constraint")]
    ConstraintViolation { observation: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("series too short: length {len} must exceed max lag {max_lag}")]
    SeriesTooShort { len: usize, max_lag: usize },

    #[error("chain diverged at iteration {iteration}")]
    Divergence {
        iteration: usize,
        /// Draws retained up to the divergent iteration.
        partial: Box<ChainOutput>,
    },
}

pub type Result<T, E = HulaError> = std::result::Result<T, E>;
