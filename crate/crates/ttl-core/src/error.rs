//! Error taxonomy shared by every module.
//!
//! The variants map onto process exit codes in the CLI: validation and
//! refusal problems are user-input errors (exit 1), certificate recheck
//! failures are their own category (exit 2), and bracket or convergence
//! failures from iterative solvers signal that a computation gave up
//! rather than returned a wrong number (exit 3).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented invariant (bad dimension, weights
    /// that do not sum to one, p < 1, ...). Names the violated condition.
    #[error("validation error: {0}")]
    Invalid(String),

    /// A lower-bound certificate failed an inequality recheck.
    #[error("certificate check failed: {0}")]
    Certificate(String),

    /// A bisection bracket was exhausted before the target was met.
    #[error("bracket exhausted: {0}")]
    Bracket(String),

    /// An iterative solver (LP, series, bisection) did not converge.
    #[error("did not converge: {0}")]
    Convergence(String),

    /// The operation refuses to produce a meaningless answer
    /// (e.g. a chi-squared series bound far outside its usable range).
    #[error("refused: {0}")]
    Refused(String),
}

impl Error {
    /// Exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Refused(_) => 1,
            Error::Certificate(_) => 2,
            Error::Bracket(_) | Error::Convergence(_) => 3,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
