use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("problem has binary variables; use solve_mip")]
    HasIntegerVariables,
    #[error("problem has no binary variables; use solve_lp")]
    NoIntegerVariables,
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The basis could not be factorized even after repair.
    #[error("numerically singular basis: {unpivoted} of {rows} rows could not be pivoted (basis columns {columns:?})")]
    SingularBasis {
        rows: usize,
        unpivoted: usize,
        columns: Vec<usize>,
    },
}
