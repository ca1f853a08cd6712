//! Self-contained LP and binary MILP solver.
//!
//! [`solve_lp`] runs a bounded-variable revised simplex with a sparse LU
//! basis factorization; [`solve_mip`] wraps it in best-first
//! branch-and-bound. Both are deterministic: the same problem always yields
//! the same pivot sequence and solution.

mod error;
mod lu;
mod mip;
mod problem;
mod simplex;
mod solve;

pub use error::LpError;
pub use mip::{relative_gap, solve_mip, solve_mip_with, MipConfig, MipSolution, MipStatus, INTEGRALITY_TOL};
pub use problem::{Constraint, LpProblem, Relation};
pub use solve::{dual_bound, solve_lp, solve_lp_with, LpOptions, LpSolution, LpStatus};

/// Primal feasibility tolerance used by the simplex on basic variables.
pub const FEAS_TOL: f64 = simplex::FEAS_TOL;
/// Reduced-cost optimality tolerance.
pub const OPT_TOL: f64 = simplex::OPT_TOL;
