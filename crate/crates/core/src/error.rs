use quadlab_lp::LpError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("target is infeasible: {0}")]
    Infeasible(String),
    #[error("problem is unbounded: {0}")]
    Unbounded(String),
    #[error("solver stopped early: {0}")]
    SolverLimit(String),
    #[error("post-solve check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::InvalidInput(msg.into()))
}
