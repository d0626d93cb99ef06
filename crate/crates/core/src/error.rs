use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("capacity exceeded: {what} would need {needed} (cap {cap}); {advice}")]
    Capacity {
        what: &'static str,
        needed: u128,
        cap: u128,
        advice: &'static str,
    },

    #[error("calculus rule is not exact for this expression at the given point: {0}")]
    CalculusInexact(String),

    #[error("not applicable: {0}")]
    Inapplicable(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("internal inconsistency: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }
}
