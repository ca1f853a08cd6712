//! Sparse-row LP/MILP model.
//!
//! Problems are always minimizations. Every variable carries a `[lo, hi]`
//! box where either side may be infinite; binary variables are boxed to
//! `[0, 1]`.

use std::fmt::Write as _;

use crate::LpError;

/// Sense of a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }

    /// Row activity bounds `[lo, hi]` implied by `relation rhs`.
    pub fn bounds(self, rhs: f64) -> (f64, f64) {
        match self {
            Relation::Le => (f64::NEG_INFINITY, rhs),
            Relation::Eq => (rhs, rhs),
            Relation::Ge => (rhs, f64::INFINITY),
        }
    }
}

/// One constraint `Σ coeffs · x  relation  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let r = self.activity(x);
        let (lo, hi) = self.relation.bounds(self.rhs);
        (lo - r).max(r - hi).max(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpProblem {
    objective: Vec<f64>,
    offset: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    binary: Vec<bool>,
    rows: Vec<Constraint>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a continuous variable and returns its index.
    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        self.binary.push(false);
        self.objective.len() - 1
    }

    /// Adds a free continuous variable.
    pub fn add_free_var(&mut self, cost: f64) -> usize {
        self.add_var(cost, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Adds a binary variable (bounds `[0, 1]`, integrality flag set).
    pub fn add_binary(&mut self, cost: f64) -> usize {
        let j = self.add_var(cost, 0.0, 1.0);
        self.binary[j] = true;
        j
    }

    /// Adds a row. Repeated indices are summed and exact zeros dropped.
    pub fn add_row<I>(&mut self, coeffs: I, relation: Relation, rhs: f64) -> usize
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut coeffs: Vec<(usize, f64)> = coeffs.into_iter().collect();
        coeffs.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for (j, a) in coeffs {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.rows.push(Constraint {
            coeffs: merged,
            relation,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        self.lower[var] = lo;
        self.upper[var] = hi;
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    /// Constant added to every reported objective value.
    pub fn set_objective_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_offset(&self) -> f64 {
        self.offset
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn rows(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn is_binary(&self, var: usize) -> bool {
        self.binary[var]
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.num_vars()).filter(|&j| self.binary[j]).collect()
    }

    pub fn has_binaries(&self) -> bool {
        self.binary.iter().any(|&b| b)
    }

    /// Copy with every integrality flag cleared (bounds are kept).
    pub fn relaxation(&self) -> LpProblem {
        let mut p = self.clone();
        p.binary.iter_mut().for_each(|b| *b = false);
        p
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest row violation of `x`.
    pub fn max_row_violation(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max)
    }

    /// Largest bound violation of `x`.
    pub fn max_bound_violation(&self, x: &[f64]) -> f64 {
        (0..self.num_vars())
            .map(|j| (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        for j in 0..n {
            let (lo, hi, c) = (self.lower[j], self.upper[j], self.objective[j]);
            if lo.is_nan() || hi.is_nan() || !c.is_finite() {
                return Err(LpError::InvalidProblem(format!(
                    "variable {j}: non-finite cost or NaN bound"
                )));
            }
            if lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::InvalidProblem(format!(
                    "variable {j}: bound [{lo}, {hi}] excludes every real value"
                )));
            }
            if self.binary[j] && (lo < 0.0 || hi > 1.0) {
                return Err(LpError::InvalidProblem(format!(
                    "binary variable {j} has bounds [{lo}, {hi}] outside [0, 1]"
                )));
            }
        }
        if !self.offset.is_finite() {
            return Err(LpError::InvalidProblem("non-finite objective offset".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::InvalidProblem(format!("row {i}: non-finite rhs")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::InvalidProblem(format!(
                        "row {i}: variable index {j} out of range ({n} variables)"
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::InvalidProblem(format!(
                        "row {i}: non-finite coefficient for variable {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump for diffing: header, objective, bounds, then one
    /// line per row (`r<i> j:a j:a ... <rel> rhs`).
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vars {} rows {}", self.num_vars(), self.num_rows());
        let _ = write!(s, "obj");
        for c in &self.objective {
            let _ = write!(s, " {c:?}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "offset {:?}", self.offset);
        for j in 0..self.num_vars() {
            let kind = if self.binary[j] { " bin" } else { "" };
            let _ = writeln!(s, "x{j} [{:?}, {:?}]{kind}", self.lower[j], self.upper[j]);
        }
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(s, "r{i}");
            for &(j, a) in &row.coeffs {
                let _ = write!(s, " {j}:{a:?}");
            }
            let _ = writeln!(s, " {} {:?}", row.relation.symbol(), row.rhs);
        }
        s
    }
}
