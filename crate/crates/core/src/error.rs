//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by operators, solvers, and audits.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Operand shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A Cholesky pivot was not strictly positive.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A transfer operator or Galerkin product lost rank.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// An iterative solver hit its iteration cap before reaching tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Armijo backtracking exhausted its budget.
    #[error("line search failed: {0}")]
    LineSearchFailed(String),

    /// The supplied direction does not point downhill.
    #[error("not a descent direction: g'd = {0:.6e}")]
    NotDescent(f64),

    /// A solver or experiment configuration failed validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Text serialization of an operator pair could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
