use thiserror::Error;

/// Errors reported by constructors, solvers and checkers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("chain is not reversible: pi[{i}]*a[{i}][{j}] != pi[{j}]*a[{j}][{i}] (residual {residual:e})")]
    NotReversible { i: usize, j: usize, residual: f64 },
    #[error("martingale property fails at level {level}, atom {atom}: distance {distance:e}")]
    NotMartingale {
        level: usize,
        atom: usize,
        distance: f64,
    },
    #[error("filtration is not nested at level {level}: atom {atom} splits a coarser atom")]
    NotNested { level: usize, atom: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("certificate violated: {0}")]
    Violation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
