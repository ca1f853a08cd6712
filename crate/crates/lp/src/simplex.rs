//! Bounded-variable revised primal simplex.
//!
//! The problem `min cᵀx, L ≤ Ax ≤ U, l ≤ x ≤ u` is held as
//! `[A | -I] (x, s) = 0` with one logical variable `s_i` per row carrying the
//! row bounds. The basis starts at all logicals; phase 1 minimizes the sum
//! of bound violations of basic variables, phase 2 the true objective.
//! Pricing is Dantzig's rule with a Harris two-pass ratio test. After
//! `STALL_LIMIT` consecutive degenerate pivots both entering and leaving
//! choices switch to Bland's smallest-index rule until a pivot makes
//! progress again.

use crate::lu::{LuFactors, Singular};
use crate::{LpError, LpProblem};

/// Primal feasibility tolerance on basic variables.
pub(crate) const FEAS_TOL: f64 = 1e-9;
/// Reduced-cost tolerance.
pub(crate) const OPT_TOL: f64 = 1e-9;
/// Entries of the entering column smaller than this never block.
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const STALL_LIMIT: usize = 50;
const MAX_REPAIRS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic away from its bounds (only free variables start here).
    Free,
}

/// Basis snapshot used to warm-start a solve after bound changes.
#[derive(Debug, Clone)]
pub(crate) struct Basis {
    head: Vec<usize>,
    state: Vec<VarState>,
    x_nonbasic_free: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

enum Step {
    Flip(f64),
    Pivot { pos: usize, t: f64, to_upper: bool },
    Unbounded,
}

#[derive(Debug, Clone)]
pub(crate) struct Simplex {
    n: usize,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    offset: f64,
    head: Vec<usize>,
    state: Vec<VarState>,
    x: Vec<f64>,
    lu: Option<LuFactors>,
    etas: Vec<Eta>,
    fresh: bool,
    pub(crate) iterations: usize,
    pub(crate) max_iterations: usize,
}

impl Simplex {
    pub(crate) fn new(problem: &LpProblem) -> Self {
        let n = problem.num_vars();
        let m = problem.num_rows();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m];
        for (i, row) in problem.rows().iter().enumerate() {
            for &(j, a) in &row.coeffs {
                cols[j].push((i, a));
            }
            cols[n + i].push((i, -1.0));
        }
        let mut cost = problem.objective().to_vec();
        cost.resize(n + m, 0.0);
        let mut lo = problem.lower().to_vec();
        let mut hi = problem.upper().to_vec();
        for row in problem.rows() {
            let (l, h) = row.relation.bounds(row.rhs);
            lo.push(l);
            hi.push(h);
        }
        let mut state = vec![VarState::Basic; n + m];
        let mut x = vec![0.0; n + m];
        for j in 0..n {
            let (s, v) = nonbasic_start(lo[j], hi[j]);
            state[j] = s;
            x[j] = v;
        }
        let head = (n..n + m).collect();
        let max_iterations = 20_000usize.max(30 * (n + m));
        Simplex {
            n,
            m,
            cols,
            cost,
            lo,
            hi,
            offset: problem.objective_offset(),
            head,
            state,
            x,
            lu: None,
            etas: Vec::new(),
            fresh: false,
            iterations: 0,
            max_iterations,
        }
    }

    /// Changes the box of structural variable `j`. Basic values are
    /// recomputed at the start of the next solve.
    pub(crate) fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        match self.state[j] {
            VarState::Basic => {}
            VarState::AtLower if lo.is_finite() => self.x[j] = lo,
            VarState::AtUpper if hi.is_finite() => self.x[j] = hi,
            VarState::Free if self.x[j] >= lo && self.x[j] <= hi => {}
            _ => {
                let (s, v) = nonbasic_start(lo, hi);
                self.state[j] = s;
                self.x[j] = v;
            }
        }
        self.fresh = false;
    }

    pub(crate) fn basis(&self) -> Basis {
        Basis {
            head: self.head.clone(),
            state: self.state.clone(),
            x_nonbasic_free: (0..self.n + self.m)
                .filter(|&j| self.state[j] == VarState::Free)
                .map(|j| (j, self.x[j]))
                .collect(),
        }
    }

    /// Installs a basis snapshot; nonbasic values are re-derived from the
    /// current bounds.
    pub(crate) fn load_basis(&mut self, basis: &Basis) {
        self.head.clone_from(&basis.head);
        self.state.clone_from(&basis.state);
        for &(j, v) in &basis.x_nonbasic_free {
            self.x[j] = v;
        }
        for j in 0..self.n + self.m {
            let (lo, hi) = (self.lo[j], self.hi[j]);
            match self.state[j] {
                VarState::Basic => {}
                VarState::AtLower if lo.is_finite() => self.x[j] = lo,
                VarState::AtUpper if hi.is_finite() => self.x[j] = hi,
                VarState::Free if self.x[j] >= lo && self.x[j] <= hi => {}
                _ => {
                    let (s, v) = nonbasic_start(lo, hi);
                    self.state[j] = s;
                    self.x[j] = v;
                }
            }
        }
        self.lu = None;
        self.fresh = false;
    }

    pub(crate) fn structural_values(&self) -> Vec<f64> {
        self.x[..self.n].to_vec()
    }

    pub(crate) fn objective_value(&self) -> f64 {
        self.offset
            + (0..self.n)
                .map(|j| self.cost[j] * self.x[j])
                .sum::<f64>()
    }

    /// Row duals `y = B⁻ᵀ c_B` and structural reduced costs `c - Aᵀy`.
    pub(crate) fn duals(&self) -> (Vec<f64>, Vec<f64>) {
        let cb: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
        let y = self.btran(&cb);
        let d = (0..self.n).map(|j| self.reduced_cost(j, self.cost[j], &y)).collect();
        (y, d)
    }

    fn reduced_cost(&self, j: usize, c: f64, y: &[f64]) -> f64 {
        c - self.cols[j].iter().map(|&(r, a)| a * y[r]).sum::<f64>()
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let mut repairs = 0;
        loop {
            let cols: Vec<&[(usize, f64)]> =
                self.head.iter().map(|&j| self.cols[j].as_slice()).collect();
            match LuFactors::factorize(self.m, &cols) {
                Ok(lu) => {
                    self.lu = Some(lu);
                    self.etas.clear();
                    break;
                }
                Err(Singular { positions, rows }) => {
                    repairs += 1;
                    if repairs > MAX_REPAIRS {
                        return Err(LpError::SingularBasis {
                            rows: self.m,
                            unpivoted: rows.len(),
                            columns: positions.iter().map(|&p| self.head[p]).collect(),
                        });
                    }
                    for (&pos, &row) in positions.iter().zip(&rows) {
                        let out = self.head[pos];
                        let logical = self.n + row;
                        if self.state[logical] == VarState::Basic {
                            return Err(LpError::SingularBasis {
                                rows: self.m,
                                unpivoted: rows.len(),
                                columns: positions.iter().map(|&p| self.head[p]).collect(),
                            });
                        }
                        let (s, v) = nearest_bound(self.lo[out], self.hi[out], self.x[out]);
                        self.state[out] = s;
                        self.x[out] = v;
                        self.head[pos] = logical;
                        self.state[logical] = VarState::Basic;
                    }
                }
            }
        }
        self.compute_basic_values();
        self.fresh = true;
        Ok(())
    }

    fn compute_basic_values(&mut self) {
        let mut rhs = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if self.state[j] == VarState::Basic || self.x[j] == 0.0 {
                continue;
            }
            let v = self.x[j];
            for &(r, a) in &self.cols[j] {
                rhs[r] -= a * v;
            }
        }
        let mut xb = vec![0.0; self.m];
        self.lu.as_ref().expect("factorized").solve(&mut rhs, &mut xb);
        for e in &self.etas {
            apply_eta(e, &mut xb);
        }
        for (p, &j) in self.head.iter().enumerate() {
            self.x[j] = xb[p];
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.m];
        for &(r, a) in &self.cols[j] {
            b[r] = a;
        }
        let mut out = vec![0.0; self.m];
        self.lu.as_ref().expect("factorized").solve(&mut b, &mut out);
        for e in &self.etas {
            apply_eta(e, &mut out);
        }
        out
    }

    fn btran(&self, cb: &[f64]) -> Vec<f64> {
        let mut c = cb.to_vec();
        for e in self.etas.iter().rev() {
            let mut s = c[e.pos];
            for &(i, a) in &e.entries {
                s -= a * c[i];
            }
            c[e.pos] = s / e.pivot;
        }
        let mut y = vec![0.0; self.m];
        let mut scratch = vec![0.0; self.m];
        self.lu
            .as_ref()
            .expect("factorized")
            .solve_transpose(&c, &mut y, &mut scratch);
        y
    }

    /// Phase-1 costs for the basic variables; returns whether any basic
    /// variable is infeasible.
    fn phase_costs(&self, cb: &mut [f64]) -> bool {
        let mut infeasible = false;
        for (p, &j) in self.head.iter().enumerate() {
            let v = self.x[j];
            cb[p] = if v < self.lo[j] - FEAS_TOL {
                infeasible = true;
                -1.0
            } else if v > self.hi[j] + FEAS_TOL {
                infeasible = true;
                1.0
            } else {
                0.0
            };
        }
        infeasible
    }

    /// Chooses an entering variable and its direction of motion.
    fn price(&self, y: &[f64], phase1: bool, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n + self.m {
            let st = self.state[j];
            if st == VarState::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let c = if phase1 { 0.0 } else { self.cost[j] };
            let d = self.reduced_cost(j, c, y);
            let dir = match st {
                VarState::AtLower if d < -OPT_TOL => 1.0,
                VarState::AtUpper if d > OPT_TOL => -1.0,
                VarState::Free if d < -OPT_TOL => 1.0,
                VarState::Free if d > OPT_TOL => -1.0,
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    /// Bound a basic variable runs into when moving at `rate`.
    fn blocking_bound(&self, j: usize, rate: f64, phase1: bool) -> Option<f64> {
        let (v, lo, hi) = (self.x[j], self.lo[j], self.hi[j]);
        if rate < 0.0 {
            if phase1 && v > hi + FEAS_TOL {
                Some(hi)
            } else if v >= lo - FEAS_TOL && lo.is_finite() {
                Some(lo)
            } else {
                None
            }
        } else if phase1 && v < lo - FEAS_TOL {
            Some(lo)
        } else if v <= hi + FEAS_TOL && hi.is_finite() {
            Some(hi)
        } else {
            None
        }
    }

    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64], phase1: bool, bland: bool) -> Step {
        let flip = if dir > 0.0 {
            self.hi[q] - self.x[q]
        } else {
            self.x[q] - self.lo[q]
        };
        let mut t_max = f64::INFINITY;
        for (p, &a) in alpha.iter().enumerate() {
            if a.abs() < PIVOT_TOL {
                continue;
            }
            let j = self.head[p];
            let rate = -dir * a;
            if let Some(b) = self.blocking_bound(j, rate, phase1) {
                let relaxed = if rate < 0.0 {
                    (self.x[j] - (b - FEAS_TOL)) / -rate
                } else {
                    ((b + FEAS_TOL) - self.x[j]) / rate
                };
                t_max = t_max.min(relaxed);
            }
        }
        if flip.is_finite() && flip <= t_max {
            return Step::Flip(flip.max(0.0));
        }
        if t_max == f64::INFINITY {
            return Step::Unbounded;
        }
        let mut choice: Option<(usize, f64, bool)> = None;
        let mut best_abs = 0.0;
        for (p, &a) in alpha.iter().enumerate() {
            if a.abs() < PIVOT_TOL {
                continue;
            }
            let j = self.head[p];
            let rate = -dir * a;
            let Some(b) = self.blocking_bound(j, rate, phase1) else {
                continue;
            };
            let exact = if rate < 0.0 {
                (self.x[j] - b) / -rate
            } else {
                (b - self.x[j]) / rate
            };
            if exact > t_max {
                continue;
            }
            let better = match choice {
                None => true,
                Some((bp, _, _)) if bland => j < self.head[bp],
                Some(_) => a.abs() > best_abs,
            };
            if better {
                best_abs = a.abs();
                let to_upper = b == self.hi[j] && self.lo[j] != self.hi[j];
                choice = Some((p, exact.max(0.0), to_upper));
            }
        }
        match choice {
            Some((pos, t, to_upper)) => Step::Pivot { pos, t, to_upper },
            None => Step::Unbounded,
        }
    }

    pub(crate) fn solve(&mut self) -> Result<Outcome, LpError> {
        self.refactor()?;
        let mut cb = vec![0.0; self.m];
        let mut stall = 0usize;
        let mut bland = false;
        let start = self.iterations;
        loop {
            if self.iterations - start >= self.max_iterations {
                return Ok(Outcome::IterationLimit);
            }
            let phase1 = self.phase_costs(&mut cb);
            if !phase1 {
                for (p, &j) in self.head.iter().enumerate() {
                    cb[p] = self.cost[j];
                }
            }
            let y = self.btran(&cb);
            let Some((q, dir)) = self.price(&y, phase1, bland) else {
                if !self.fresh {
                    self.refactor()?;
                    continue;
                }
                return Ok(if phase1 {
                    Outcome::Infeasible
                } else {
                    Outcome::Optimal
                });
            };
            let alpha = self.ftran(q);
            let step = self.ratio_test(q, dir, &alpha, phase1, bland);
            let t = match step {
                Step::Unbounded => {
                    if !self.fresh {
                        self.refactor()?;
                        continue;
                    }
                    if phase1 {
                        return Err(LpError::Numerical(
                            "phase 1 found an unbounded improving ray".into(),
                        ));
                    }
                    return Ok(Outcome::Unbounded);
                }
                Step::Flip(t) => {
                    self.move_along(q, dir, t, &alpha);
                    self.state[q] = if dir > 0.0 {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    t
                }
                Step::Pivot { pos, t, to_upper } => {
                    self.move_along(q, dir, t, &alpha);
                    let out = self.head[pos];
                    if to_upper {
                        self.state[out] = VarState::AtUpper;
                        self.x[out] = self.hi[out];
                    } else {
                        self.state[out] = VarState::AtLower;
                        self.x[out] = self.lo[out];
                    }
                    self.head[pos] = q;
                    self.state[q] = VarState::Basic;
                    let entries = alpha
                        .iter()
                        .enumerate()
                        .filter(|&(i, a)| i != pos && a.abs() > 1e-14)
                        .map(|(i, &a)| (i, a))
                        .collect();
                    self.etas.push(Eta {
                        pos,
                        pivot: alpha[pos],
                        entries,
                    });
                    t
                }
            };
            self.iterations += 1;
            self.fresh = false;
            if t > 1e-12 {
                stall = 0;
                bland = false;
            } else {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            }
            if self.etas.len() >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
    }

    fn move_along(&mut self, q: usize, dir: f64, t: f64, alpha: &[f64]) {
        if t == 0.0 {
            return;
        }
        self.x[q] += dir * t;
        for (p, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let j = self.head[p];
                self.x[j] -= dir * t * a;
            }
        }
    }
}

fn apply_eta(e: &Eta, x: &mut [f64]) {
    let xp = x[e.pos] / e.pivot;
    x[e.pos] = xp;
    if xp != 0.0 {
        for &(i, a) in &e.entries {
            x[i] -= a * xp;
        }
    }
}

fn nonbasic_start(lo: f64, hi: f64) -> (VarState, f64) {
    if lo.is_finite() {
        (VarState::AtLower, lo)
    } else if hi.is_finite() {
        (VarState::AtUpper, hi)
    } else {
        (VarState::Free, 0.0)
    }
}

fn nearest_bound(lo: f64, hi: f64, v: f64) -> (VarState, f64) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            if (v - lo).abs() <= (hi - v).abs() {
                (VarState::AtLower, lo)
            } else {
                (VarState::AtUpper, hi)
            }
        }
        (true, false) => (VarState::AtLower, lo),
        (false, true) => (VarState::AtUpper, hi),
        (false, false) => (VarState::Free, v),
    }
}
