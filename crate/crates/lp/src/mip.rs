//! Best-first branch-and-bound over LP relaxations for binary MILPs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::simplex::{Basis, Outcome, Simplex};
use crate::{LpError, LpProblem};

/// Binary values within this distance of 0 or 1 count as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    /// Stopped at the node limit with an incumbent.
    Feasible,
    Infeasible,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipSolution {
    pub status: MipStatus,
    /// Incumbent values with binaries snapped to {0, 1}; empty when none.
    pub x: Vec<f64>,
    /// Incumbent objective (`+∞` when none).
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    /// Global bound after each processed node.
    pub bound_history: Vec<f64>,
}

impl MipSolution {
    pub fn has_incumbent(&self) -> bool {
        !self.x.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct MipConfig {
    pub time_limit_s: f64,
    pub gap_tol: f64,
    pub node_limit: Option<usize>,
    /// Values for the binary variables used to seed the incumbent; other
    /// entries are ignored.
    pub initial_assignment: Option<Vec<f64>>,
    /// Run the rounding heuristic every this many nodes (root always).
    pub heuristic_period: usize,
}

impl Default for MipConfig {
    fn default() -> Self {
        MipConfig {
            time_limit_s: f64::INFINITY,
            gap_tol: 1e-9,
            node_limit: None,
            initial_assignment: None,
            heuristic_period: 50,
        }
    }
}

pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    (incumbent - bound).abs() / incumbent.abs().max(1.0)
}

pub fn solve_mip(problem: &LpProblem, time_limit_s: f64, gap_tol: f64) -> Result<MipSolution, LpError> {
    solve_mip_with(
        problem,
        &MipConfig {
            time_limit_s,
            gap_tol,
            ..MipConfig::default()
        },
    )
}

struct Node {
    bound: f64,
    seq: usize,
    fixes: Vec<(usize, f64)>,
    basis: Basis,
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
    // BinaryHeap is a max-heap: the smallest bound, then oldest node, wins.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    problem: &'a LpProblem,
    binaries: Vec<usize>,
    sx: Simplex,
    incumbent: Option<(f64, Vec<f64>)>,
}

impl Search<'_> {
    fn apply_fixes(&mut self, fixes: &[(usize, f64)]) {
        for &j in &self.binaries {
            let (lo, hi) = (self.problem.lower()[j], self.problem.upper()[j]);
            self.sx.set_bounds(j, lo, hi);
        }
        for &(j, v) in fixes {
            self.sx.set_bounds(j, v, v);
        }
    }

    fn solve_node(&mut self) -> Result<Outcome, LpError> {
        match self.sx.solve()? {
            Outcome::IterationLimit => Err(LpError::Numerical(
                "iteration limit in a branch-and-bound node".into(),
            )),
            Outcome::Unbounded => Err(LpError::InvalidProblem(
                "LP relaxation is unbounded".into(),
            )),
            o => Ok(o),
        }
    }

    fn offer(&mut self, x: &[f64]) {
        let mut x = x.to_vec();
        for &j in &self.binaries {
            x[j] = x[j].round();
        }
        let value = self.problem.evaluate(&x);
        if self.incumbent.as_ref().is_none_or(|(v, _)| value < *v) {
            self.incumbent = Some((value, x));
        }
    }

    /// Fixes every binary to `values[j]` (rounded) and solves the remaining LP.
    fn try_assignment(&mut self, values: &[f64], basis: &Basis) -> Result<(), LpError> {
        let fixes: Vec<(usize, f64)> = self
            .binaries
            .iter()
            .map(|&j| (j, values[j].round().clamp(0.0, 1.0)))
            .collect();
        self.apply_fixes(&fixes);
        self.sx.load_basis(basis);
        if self.solve_node()? == Outcome::Optimal {
            let x = self.sx.structural_values();
            self.offer(&x);
        }
        Ok(())
    }

    fn incumbent_value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v)
    }
}

fn most_fractional(x: &[f64], binaries: &[usize]) -> Option<usize> {
    let mut best = None;
    let mut best_frac = INTEGRALITY_TOL;
    for &j in binaries {
        let frac = x[j].min(1.0 - x[j]);
        if frac > best_frac {
            best_frac = frac;
            best = Some(j);
        }
    }
    best
}

pub fn solve_mip_with(problem: &LpProblem, config: &MipConfig) -> Result<MipSolution, LpError> {
    problem.validate()?;
    if !problem.has_binaries() {
        return Err(LpError::NoIntegerVariables);
    }
    let start = Instant::now();
    let relax = problem.relaxation();
    let mut search = Search {
        problem,
        binaries: problem.binaries(),
        sx: Simplex::new(&relax),
        incumbent: None,
    };
    let root_basis = search.sx.basis();

    if let Some(init) = &config.initial_assignment {
        if init.len() != problem.num_vars() {
            return Err(LpError::InvalidProblem(format!(
                "initial assignment has {} entries for {} variables",
                init.len(),
                problem.num_vars()
            )));
        }
        search.try_assignment(init, &root_basis)?;
    }

    let prune_slack = |inc: f64| config.gap_tol.max(1e-9) * inc.abs().max(1.0);

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq: 0,
        fixes: Vec::new(),
        basis: root_basis,
    });
    let mut seq = 1usize;
    let mut nodes = 0usize;
    let mut history = Vec::new();
    let mut global_bound = f64::NEG_INFINITY;
    // Smallest bound among nodes discarded by the gap test rather than by
    // proof; the final bound cannot exceed it.
    let mut pruned_min = f64::INFINITY;
    let mut stopped = None;

    while let Some(node) = heap.pop() {
        let inc = search.incumbent_value();
        if node.bound >= inc - prune_slack(inc) {
            pruned_min = pruned_min.min(node.bound);
            continue;
        }
        if start.elapsed().as_secs_f64() > config.time_limit_s {
            let b = node.bound;
            heap.push(node);
            stopped = Some((MipStatus::TimeLimit, b));
            break;
        }
        if config.node_limit.is_some_and(|lim| nodes >= lim) {
            let b = node.bound;
            heap.push(node);
            stopped = Some((MipStatus::Feasible, b));
            break;
        }
        nodes += 1;
        search.apply_fixes(&node.fixes);
        search.sx.load_basis(&node.basis);
        let outcome = search.solve_node()?;
        global_bound = global_bound.max(node.bound.min(search.incumbent_value()));
        history.push(global_bound);
        if outcome == Outcome::Infeasible {
            continue;
        }
        let value = search.sx.objective_value().max(node.bound);
        let x = search.sx.structural_values();
        let basis = search.sx.basis();
        let inc = search.incumbent_value();
        if value >= inc - prune_slack(inc) {
            pruned_min = pruned_min.min(value);
            continue;
        }
        match most_fractional(&x, &search.binaries) {
            None => search.offer(&x),
            Some(j) => {
                if nodes == 1 || nodes % config.heuristic_period.max(1) == 0 {
                    search.try_assignment(&x, &basis)?;
                }
                for v in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, v));
                    heap.push(Node {
                        bound: value,
                        seq,
                        fixes,
                        basis: basis.clone(),
                    });
                    seq += 1;
                }
            }
        }
    }

    let inc = search.incumbent_value();
    let (status, mut bound) = match stopped {
        Some((status, b)) => {
            let open = heap.iter().map(|n| n.bound).fold(b, f64::min);
            (status, open.min(pruned_min))
        }
        None if search.incumbent.is_some() => (MipStatus::Optimal, pruned_min),
        None => (MipStatus::Infeasible, f64::INFINITY),
    };
    bound = bound.min(inc).max(global_bound.min(inc));
    if status == MipStatus::Feasible && search.incumbent.is_none() {
        return Ok(MipSolution {
            status: MipStatus::TimeLimit,
            x: Vec::new(),
            objective: f64::INFINITY,
            bound,
            gap: f64::INFINITY,
            nodes,
            bound_history: history,
        });
    }
    let (objective, x) = search.incumbent.unwrap_or((f64::INFINITY, Vec::new()));
    Ok(MipSolution {
        status,
        gap: relative_gap(objective, bound),
        x,
        objective,
        bound,
        nodes,
        bound_history: history,
    })
}
