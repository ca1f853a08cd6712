//! Best-subset regression under squared and superexpectation error.
//!
//! The SE variant is a big-M MILP on top of the SE-regression LP and goes
//! through `quadlab_lp::solve_mip_with`. The MSE variant runs its own
//! best-first branch-and-bound over include/exclude decisions, bounding each
//! node by least squares on the columns not yet excluded.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use nalgebra::DVector;
use quadlab_lp::{relative_gap, solve_mip_with, MipConfig, MipStatus, Relation};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distributions::{sample_correlated_design, sample_standard_normal, DesignSpec};
use crate::error::{invalid, CoreError, Result};
use crate::functionals::BiasParam;
use crate::regression::{fit_ols, fit_se, mse, residuals, se_error, se_lp, Dataset, LinearModel};

/// Largest number of supports [`brute_force_subset`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;
/// Coefficients at or above this fraction of `M` count as hitting the bound.
const BIG_M_ACTIVE: f64 = 0.99;
const BIG_M_DOUBLINGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Mse,
    Se,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BigM {
    /// `2·max(1, ‖c_ols‖∞)` from an unrestricted OLS fit.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone)]
pub struct SparseProblem {
    pub data: Dataset,
    pub k: usize,
    pub error: ErrorKind,
    pub big_m: BigM,
    pub time_limit_s: f64,
    pub gap_tol: f64,
}

impl SparseProblem {
    pub fn new(data: Dataset, k: usize, error: ErrorKind) -> Result<Self> {
        let p = SparseProblem {
            data,
            k,
            error,
            big_m: BigM::Auto,
            time_limit_s: f64::INFINITY,
            gap_tol: 1e-9,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let d = self.data.d();
        if self.k == 0 || self.k > d {
            return invalid(format!("cardinality k = {} must lie in 1..={d}", self.k));
        }
        if let BigM::Value(m) = self.big_m {
            if !(m > 0.0 && m.is_finite()) {
                return invalid(format!("big-M must be positive, got {m}"));
            }
        }
        if !(self.gap_tol >= 0.0) || self.time_limit_s.is_nan() || self.time_limit_s < 0.0 {
            return invalid("gap tolerance and time limit must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    Optimal,
    /// Node limit reached with an incumbent.
    Feasible,
    TimeLimit,
}

impl From<MipStatus> for SearchStatus {
    fn from(s: MipStatus) -> Self {
        match s {
            MipStatus::Optimal | MipStatus::Infeasible => SearchStatus::Optimal,
            MipStatus::Feasible => SearchStatus::Feasible,
            MipStatus::TimeLimit => SearchStatus::TimeLimit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseSolution {
    pub model: LinearModel,
    pub support: Vec<usize>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub status: SearchStatus,
    /// SE only: `M` had to be doubled at least once.
    pub big_m_active: bool,
    /// SE only: the `M` used in the final solve.
    pub big_m: Option<f64>,
    pub nodes: usize,
    pub time_s: f64,
}

fn error_of(kind: ErrorKind, model: &LinearModel, data: &Dataset) -> f64 {
    let z = residuals(model, data);
    match kind {
        ErrorKind::Mse => mse(&z),
        ErrorKind::Se => se_error(&z, BiasParam(0.0)),
    }
}

/// Fit restricted to `cols`, expanded back to all `d` coefficients.
fn restricted_fit(data: &Dataset, cols: &[usize], kind: ErrorKind) -> Result<(LinearModel, f64, bool)> {
    let sub = data.select_columns(cols);
    let fit = match kind {
        ErrorKind::Mse => fit_ols(&sub),
        ErrorKind::Se => fit_se(&sub)?,
    };
    let mut coefficients = vec![0.0; data.d()];
    for (&j, &c) in cols.iter().zip(&fit.model.coefficients) {
        coefficients[j] = c;
    }
    let model = LinearModel {
        intercept: fit.model.intercept,
        coefficients,
    };
    let value = error_of(kind, &model, data);
    Ok((model, value, fit.regularized))
}

fn support_of(model: &LinearModel) -> Vec<usize> {
    (0..model.coefficients.len())
        .filter(|&j| model.coefficients[j] != 0.0)
        .collect()
}

/// Forward selection: adds the column that lowers the error most, `k` times.
pub fn greedy_forward(data: &Dataset, k: usize, kind: ErrorKind) -> Result<(LinearModel, f64)> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut best = restricted_fit(data, &[], kind)?;
    for _ in 0..k.min(data.d()) {
        let mut step: Option<(usize, (LinearModel, f64, bool))> = None;
        for j in (0..data.d()).filter(|j| !chosen.contains(j)) {
            let mut cols = chosen.clone();
            cols.push(j);
            cols.sort_unstable();
            let fit = restricted_fit(data, &cols, kind)?;
            if step.as_ref().is_none_or(|(_, s)| fit.1 < s.1) {
                step = Some((j, fit));
            }
        }
        let (j, fit) = step.expect("a column remains");
        chosen.push(j);
        chosen.sort_unstable();
        best = fit;
    }
    Ok((best.0, best.1))
}

/// `C(n, k)`; stops early once the count is far past [`BRUTE_FORCE_LIMIT`].
pub fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    let mut c: u128 = 1;
    for i in 0..k as u128 {
        c = c * (n as u128 - i) / (i + 1);
        if c > BRUTE_FORCE_LIMIT * 1000 {
            return c;
        }
    }
    c
}

/// Exhaustive search over all supports of size exactly `k`.
pub fn brute_force_subset(data: &Dataset, k: usize, kind: ErrorKind) -> Result<SparseSolution> {
    let d = data.d();
    if k == 0 || k > d {
        return invalid(format!("cardinality k = {k} must lie in 1..={d}"));
    }
    let count = binomial(d, k);
    if count > BRUTE_FORCE_LIMIT {
        return invalid(format!("C({d}, {k}) = {count} supports exceed the limit {BRUTE_FORCE_LIMIT}"));
    }
    let start = Instant::now();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(LinearModel, f64)> = None;
    let mut nodes = 0;
    loop {
        let (model, value, _) = restricted_fit(data, &idx, kind)?;
        nodes += 1;
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            best = Some((model, value));
        }
        // Next combination in lexicographic order.
        let mut i = k;
        while i > 0 && idx[i - 1] == d - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    let (model, objective) = best.expect("at least one support");
    Ok(SparseSolution {
        support: support_of(&model),
        model,
        objective,
        bound: objective,
        gap: 0.0,
        status: SearchStatus::Optimal,
        big_m_active: false,
        big_m: None,
        nodes,
        time_s: start.elapsed().as_secs_f64(),
    })
}

/// Big-M MILP for SE best-subset regression.
pub fn fit_sparse_se(problem: &SparseProblem) -> Result<SparseSolution> {
    problem.validate()?;
    if problem.error != ErrorKind::Se {
        return invalid("fit_sparse_se needs error kind se");
    }
    let start = Instant::now();
    let data = &problem.data;
    let d = data.d();
    let mut m = match problem.big_m {
        BigM::Value(v) => v,
        BigM::Auto => {
            let ols = fit_ols(data);
            2.0 * ols.model.coefficients.iter().fold(1.0f64, |a, c| a.max(c.abs()))
        }
    };
    let (greedy, _) = greedy_forward(data, problem.k, ErrorKind::Se)?;
    let mut doubled = false;
    let mut nodes = 0;
    for attempt in 0..=BIG_M_DOUBLINGS {
        let mut lp = se_lp(data);
        let z: Vec<usize> = (0..d).map(|_| lp.add_binary(0.0)).collect();
        for j in 0..d {
            lp.add_row([(j + 1, 1.0), (z[j], -m)], Relation::Le, 0.0);
            lp.add_row([(j + 1, 1.0), (z[j], m)], Relation::Ge, 0.0);
        }
        lp.add_row(z.iter().map(|&v| (v, 1.0)), Relation::Le, problem.k as f64);
        let mut init = vec![0.0; lp.num_vars()];
        let seeded = greedy.coefficients.iter().all(|c| c.abs() < BIG_M_ACTIVE * m);
        for j in 0..d {
            init[z[j]] = if greedy.coefficients[j] != 0.0 { 1.0 } else { 0.0 };
        }
        let config = MipConfig {
            time_limit_s: (problem.time_limit_s - start.elapsed().as_secs_f64()).max(0.0),
            gap_tol: problem.gap_tol,
            initial_assignment: seeded.then_some(init),
            ..MipConfig::default()
        };
        let sol = solve_mip_with(&lp, &config)?;
        nodes += sol.nodes;
        if sol.status == MipStatus::Infeasible {
            return Err(CoreError::Infeasible("sparse SE MILP is infeasible".into()));
        }
        if !sol.has_incumbent() {
            return Err(CoreError::SolverLimit(format!(
                "no incumbent within the {} s time limit",
                problem.time_limit_s
            )));
        }
        let active = (0..d).any(|j| sol.x[j + 1].abs() >= BIG_M_ACTIVE * m);
        if active && attempt < BIG_M_DOUBLINGS {
            m *= 2.0;
            doubled = true;
            continue;
        }
        if active {
            return Err(CoreError::Check(format!(
                "coefficients still reach {BIG_M_ACTIVE}·M after {BIG_M_DOUBLINGS} doublings (M = {m})"
            )));
        }
        // Refit on the chosen support: exact zeros off it and a centred
        // intercept, never worse than the MILP incumbent.
        let support: Vec<usize> = (0..d).filter(|&j| sol.x[z[j]] > 0.5).collect();
        let (model, objective, _) = restricted_fit(data, &support, ErrorKind::Se)?;
        let bound = sol.bound.min(objective);
        return Ok(SparseSolution {
            support: support_of(&model),
            model,
            gap: relative_gap(objective, bound),
            objective,
            bound,
            status: sol.status.into(),
            big_m_active: doubled,
            big_m: Some(m),
            nodes,
            time_s: start.elapsed().as_secs_f64(),
        });
    }
    unreachable!("the loop returns on its last attempt")
}

struct Node {
    bound: f64,
    seq: usize,
    included: Vec<usize>,
    excluded: Vec<usize>,
    /// Least-squares coefficients over the columns not excluded.
    relaxed: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Least squares on every column outside `excluded`. A rank-deficient fit
/// gives the trivial bound 0.
fn mse_relaxation(data: &Dataset, excluded: &[usize]) -> (f64, Vec<f64>) {
    let cols: Vec<usize> = (0..data.d()).filter(|j| !excluded.contains(j)).collect();
    let fit = fit_ols(&data.select_columns(&cols));
    let mut coef = vec![0.0; data.d()];
    for (&j, &c) in cols.iter().zip(&fit.model.coefficients) {
        coef[j] = c;
    }
    let bound = if fit.regularized { 0.0 } else { fit.objective };
    (bound, coef)
}

/// Exact best-subset least squares by branch-and-bound.
pub fn fit_sparse_mse(problem: &SparseProblem) -> Result<SparseSolution> {
    problem.validate()?;
    if problem.error != ErrorKind::Mse {
        return invalid("fit_sparse_mse needs error kind mse");
    }
    let start = Instant::now();
    let data = &problem.data;
    let (d, k) = (data.d(), problem.k);
    let (mut best_model, mut best) = greedy_forward(data, k, ErrorKind::Mse)?;
    let slack = |inc: f64| problem.gap_tol.max(1e-9) * inc.abs().max(1.0);

    let (root_bound, root_coef) = mse_relaxation(data, &[]);
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: root_bound,
        seq: 0,
        included: Vec::new(),
        excluded: Vec::new(),
        relaxed: root_coef,
    });
    let mut seq = 1;
    let mut nodes = 0;
    let mut pruned_min = f64::INFINITY;
    let mut global_bound = f64::NEG_INFINITY;
    let mut stopped: Option<f64> = None;

    while let Some(node) = heap.pop() {
        if node.bound >= best - slack(best) {
            pruned_min = pruned_min.min(node.bound);
            continue;
        }
        if start.elapsed().as_secs_f64() > problem.time_limit_s {
            stopped = Some(node.bound);
            heap.push(node);
            break;
        }
        nodes += 1;
        global_bound = global_bound.max(node.bound.min(best));

        // Rounding heuristic: forced columns plus the largest relaxed ones.
        let mut ranked: Vec<usize> = (0..d)
            .filter(|j| !node.excluded.contains(j) && !node.included.contains(j))
            .collect();
        ranked.sort_by(|&a, &b| node.relaxed[b].abs().total_cmp(&node.relaxed[a].abs()).then(a.cmp(&b)));
        let mut cols = node.included.clone();
        cols.extend(ranked.iter().take(k - node.included.len()));
        cols.sort_unstable();
        let (model, value, _) = restricted_fit(data, &cols, ErrorKind::Mse)?;
        if value < best {
            best = value;
            best_model = model;
        }

        let free = d - node.excluded.len();
        if free <= k || node.included.len() == k {
            // The relaxation is itself a feasible support; the heuristic
            // above already evaluated it.
            continue;
        }
        let j = ranked[0];
        let mut included = node.included.clone();
        included.push(j);
        let mut excluded = node.excluded.clone();
        excluded.push(j);
        let (bound, relaxed) = mse_relaxation(data, &excluded);
        let bound = bound.max(node.bound);
        if bound < best - slack(best) {
            heap.push(Node {
                bound,
                seq,
                included: node.included.clone(),
                excluded,
                relaxed,
            });
        } else {
            pruned_min = pruned_min.min(bound);
        }
        seq += 1;
        heap.push(Node {
            bound: node.bound,
            seq,
            included,
            excluded: node.excluded.clone(),
            relaxed: node.relaxed,
        });
        seq += 1;
    }

    let (status, bound) = match stopped {
        Some(b) => {
            let open = heap.iter().map(|n| n.bound).fold(b, f64::min);
            (SearchStatus::TimeLimit, open.min(pruned_min))
        }
        None => (SearchStatus::Optimal, pruned_min),
    };
    let bound = bound.min(best).max(global_bound.min(best));
    Ok(SparseSolution {
        support: support_of(&best_model),
        model: best_model,
        objective: best,
        gap: relative_gap(best, bound),
        bound,
        status,
        big_m_active: false,
        big_m: None,
        nodes,
        time_s: start.elapsed().as_secs_f64(),
    })
}

pub fn fit_sparse(problem: &SparseProblem) -> Result<SparseSolution> {
    match problem.error {
        ErrorKind::Mse => fit_sparse_mse(problem),
        ErrorKind::Se => fit_sparse_se(problem),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub accuracy: f64,
    pub k_star: usize,
}

/// `|{i : ĉᵢ ≠ 0, cᵢ* ≠ 0}| / k*`, with `|ĉᵢ| > zero_tol` counting as nonzero.
pub fn support_accuracy(estimated: &LinearModel, true_coeffs: &[f64], k_star: usize, zero_tol: f64) -> Result<RecoveryReport> {
    if k_star == 0 {
        return invalid("k* must be at least 1");
    }
    if estimated.coefficients.len() != true_coeffs.len() {
        return invalid(format!(
            "model has {} coefficients, truth has {}",
            estimated.coefficients.len(),
            true_coeffs.len()
        ));
    }
    let hits = estimated
        .coefficients
        .iter()
        .zip(true_coeffs)
        .filter(|&(&c, &t)| c.abs() > zero_tol && t != 0.0)
        .count();
    Ok(RecoveryReport {
        accuracy: hits as f64 / k_star as f64,
        k_star,
    })
}

/// AR(1) Gaussian design with a planted `±1` signal on `k_star` random
/// columns and Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlantedSpec {
    pub n: usize,
    pub d: usize,
    pub k_star: usize,
    pub rho: f64,
    pub noise_sd: f64,
}

pub fn planted_dataset(spec: PlantedSpec, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    if spec.k_star == 0 || spec.k_star > spec.d {
        return invalid(format!("k* = {} must lie in 1..={}", spec.k_star, spec.d));
    }
    let x = sample_correlated_design(DesignSpec { d: spec.d, rho: spec.rho }, spec.n, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let mut beta = vec![0.0; spec.d];
    for j in sample(&mut rng, spec.d, spec.k_star) {
        beta[j] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    let noise = sample_standard_normal(spec.n, seed.wrapping_add(0x9e37_79b9));
    let y = DVector::from_fn(spec.n, |i, _| {
        (0..spec.d).map(|j| beta[j] * x[(i, j)]).sum::<f64>() + spec.noise_sd * noise[i]
    });
    Ok((Dataset::new(x, y)?, beta))
}
