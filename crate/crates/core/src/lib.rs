//! Biased mean risk quadrangle toolkit.
//!
//! Exact functionals on empirical samples, LP-based regression fitters,
//! scenario portfolio optimization and best-subset regression, all built on
//! the solver in `quadlab-lp`.

pub mod distributions;
pub mod error;
pub mod functionals;
pub mod portfolio;
pub mod regression;
pub mod sparse;

pub use error::{CoreError, Result};
