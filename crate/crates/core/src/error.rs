use thiserror::Error;

/// Errors raised by the inference library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A Cholesky-type factorization hit a non-positive pivot.
    #[error("matrix not positive definite: pivot {value:e} at index {index}")]
    NotPositiveDefinite { index: usize, value: f64 },

    #[error("path left the model domain at step {step} (value {value})")]
    DomainExit { step: usize, value: f64 },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("degenerate regression fit: residual sum of squares {0:e}")]
    DegenerateFit(f64),

    #[error("acceptance rate {rate:.4} below {threshold} over the window ending at iteration {iteration}")]
    LowAcceptance {
        rate: f64,
        threshold: f64,
        iteration: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
