use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Cholesky factorization failed; `minor` is the 1-based index of the
    /// first leading minor that was not positive.
    #[error("matrix is not positive definite (leading minor {minor})")]
    NotPositiveDefinite { minor: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degenerate particle ensemble: {0}")]
    DegenerateEnsemble(String),
}

impl Error {
    /// True for failures of floating point algorithms (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotPositiveDefinite { .. } | Error::Numerical(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
