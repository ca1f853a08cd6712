use crate::simplex::{Outcome, Simplex};
use crate::{LpError, LpProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values (last iterate unless `status` is `Optimal`).
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Row multipliers `y`, one per row of the input problem.
    pub row_duals: Vec<f64>,
    /// `c - Aᵀy` for the structural variables.
    pub reduced_costs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LpOptions {
    /// Overrides the default iteration cap.
    pub max_iterations: Option<usize>,
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    solve_lp_with(problem, &LpOptions::default())
}

pub fn solve_lp_with(problem: &LpProblem, options: &LpOptions) -> Result<LpSolution, LpError> {
    if problem.has_binaries() {
        return Err(LpError::HasIntegerVariables);
    }
    problem.validate()?;

    // Empty rows either hold trivially or make the problem infeasible.
    let mut reduced = LpProblem::new();
    for j in 0..problem.num_vars() {
        reduced.add_var(problem.objective()[j], problem.lower()[j], problem.upper()[j]);
    }
    reduced.set_objective_offset(problem.objective_offset());
    let mut kept = Vec::with_capacity(problem.num_rows());
    let mut empty_infeasible = false;
    for (i, row) in problem.rows().iter().enumerate() {
        if row.coeffs.is_empty() {
            let (lo, hi) = row.relation.bounds(row.rhs);
            if lo > crate::FEAS_TOL || hi < -crate::FEAS_TOL {
                empty_infeasible = true;
            }
        } else {
            reduced.add_row(row.coeffs.iter().copied(), row.relation, row.rhs);
            kept.push(i);
        }
    }
    let n = problem.num_vars();
    let mut sx = Simplex::new(&reduced);
    if empty_infeasible {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: sx.structural_values(),
            objective: f64::NAN,
            iterations: 0,
            row_duals: vec![0.0; problem.num_rows()],
            reduced_costs: vec![0.0; n],
        });
    }
    if let Some(cap) = options.max_iterations {
        sx.max_iterations = cap;
    }
    let outcome = sx.solve()?;
    Ok(finish(problem, &sx, outcome, &kept))
}

pub(crate) fn finish(problem: &LpProblem, sx: &Simplex, outcome: Outcome, kept: &[usize]) -> LpSolution {
    let status = match outcome {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Infeasible => LpStatus::Infeasible,
        Outcome::Unbounded => LpStatus::Unbounded,
        Outcome::IterationLimit => LpStatus::IterationLimit,
    };
    let (y, d) = sx.duals();
    let mut row_duals = vec![0.0; problem.num_rows()];
    for (k, &i) in kept.iter().enumerate() {
        row_duals[i] = y[k];
    }
    let x = sx.structural_values();
    let objective = match status {
        LpStatus::Optimal => problem.evaluate(&x),
        LpStatus::Unbounded => f64::NEG_INFINITY,
        _ => f64::NAN,
    };
    LpSolution {
        status,
        x,
        objective,
        iterations: sx.iterations,
        row_duals,
        reduced_costs: d,
    }
}

/// Lagrangian lower bound `min_{l≤x≤u, L≤s≤U} cᵀx - yᵀ(Ax - s)` for any row
/// multipliers `y`. Equals the optimum when `y` is an optimal dual.
/// Multipliers below `zero_tol` in magnitude that face an infinite bound are
/// treated as zero.
pub fn dual_bound(problem: &LpProblem, y: &[f64], zero_tol: f64) -> f64 {
    let mut d = problem.objective().to_vec();
    for (row, &yi) in problem.rows().iter().zip(y) {
        for &(j, a) in &row.coeffs {
            d[j] -= a * yi;
        }
    }
    let mut total = problem.objective_offset();
    for (j, &dj) in d.iter().enumerate() {
        total += min_linear(dj, problem.lower()[j], problem.upper()[j], zero_tol);
    }
    for (row, &yi) in problem.rows().iter().zip(y) {
        let (lo, hi) = row.relation.bounds(row.rhs);
        total += min_linear(yi, lo, hi, zero_tol);
    }
    total
}

fn min_linear(a: f64, lo: f64, hi: f64, zero_tol: f64) -> f64 {
    let b = if a > 0.0 { lo } else { hi };
    if a == 0.0 || (!b.is_finite() && a.abs() <= zero_tol) {
        0.0
    } else {
        a * b
    }
}
