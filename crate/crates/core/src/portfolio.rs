//! Scenario portfolios minimizing superexpectation or CVaR deviation.
//!
//! Losses are `Xᵢ = −wᵀrᵢ` over equally likely scenarios, with `Σw = 1` and
//! `mean(−X) = μ`. Because the mean loss is pinned at `−μ`, both deviations
//! are plain tail expectations and the LPs are solved through their duals,
//! which have one row per asset and box-bounded scenario weights.

use nalgebra::DMatrix;
use quadlab_lp::{solve_lp, LpProblem, LpSolution, LpStatus, Relation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::Serialize;

use crate::distributions::EmpiricalSample;
use crate::error::{invalid, CoreError, Result};
use crate::functionals::{biased_mean_deviation, cvar, BiasParam, ConfidenceLevel};

/// Budget and target-mean residuals accepted in a returned solution.
pub const BUDGET_TOL: f64 = 1e-8;
pub const MEAN_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioProblem {
    returns: DMatrix<f64>,
    target_mean: f64,
    long_only: bool,
}

impl PortfolioProblem {
    pub fn new(returns: DMatrix<f64>, target_mean: f64, long_only: bool) -> Result<Self> {
        if returns.nrows() == 0 {
            return invalid("portfolio needs at least one scenario");
        }
        if returns.ncols() < 2 {
            return invalid("portfolio needs at least two assets");
        }
        if !target_mean.is_finite() || returns.iter().any(|v| !v.is_finite()) {
            return invalid("portfolio data contains non-finite entries");
        }
        Ok(PortfolioProblem {
            returns,
            target_mean,
            long_only,
        })
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn long_only(&self) -> bool {
        self.long_only
    }

    pub fn n(&self) -> usize {
        self.returns.nrows()
    }

    pub fn m(&self) -> usize {
        self.returns.ncols()
    }

    /// Loss sample `Xᵢ = −wᵀrᵢ`.
    pub fn losses(&self, w: &[f64]) -> EmpiricalSample {
        let x: Vec<f64> = (0..self.n())
            .map(|i| -(0..self.m()).map(|j| w[j] * self.returns[(i, j)]).sum::<f64>())
            .collect();
        EmpiricalSample::uniform(&x)
    }

    fn asset_means(&self) -> Vec<f64> {
        (0..self.m()).map(|j| self.returns.column(j).mean()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioSolution {
    pub weights: Vec<f64>,
    pub losses: EmpiricalSample,
    /// Deviation of `losses` evaluated exactly from the sample.
    pub deviation: f64,
    /// SE deviation: `[P(X < x + E X), P(X ≤ x + E X)]` with ties within
    /// `1e-12·max(1, |X|∞)`. CVaR deviation: the level itself.
    pub alpha_interval: (f64, f64),
    /// Level `α` at which the solution is a saddle point of the dual LP: for
    /// SE deviation the optimal weights also minimize CVaR deviation at `α`.
    pub dual_level: f64,
    pub lp_iterations: usize,
}

/// Rows `Σᵢ rᵢⱼ sᵢ + λ + r̄ⱼ ν` (`= 0`, or `≤ 0` when long-only), one per asset.
fn add_asset_rows(lp: &mut LpProblem, problem: &PortfolioProblem, s: &[usize], lambda: usize, nu: usize) {
    let relation = if problem.long_only { Relation::Le } else { Relation::Eq };
    let means = problem.asset_means();
    for (j, &rj) in means.iter().enumerate() {
        let mut row: Vec<(usize, f64)> = s.iter().enumerate().map(|(i, &v)| (v, problem.returns[(i, j)])).collect();
        row.push((lambda, 1.0));
        row.push((nu, rj));
        lp.add_row(row, relation, 0.0);
    }
}

/// Dual of `min mean(u)` s.t. `u ≥ μ − x − Rw`, `u ≥ 0`, `Σw = 1`, `r̄ᵀw = μ`.
/// Optimum is `−(D_x + x₋)`; the asset-row multipliers are `−w`.
pub fn se_dev_dual_lp(problem: &PortfolioProblem, x: BiasParam) -> LpProblem {
    let n = problem.n();
    let mu = problem.target_mean;
    let mut lp = LpProblem::new();
    let s: Vec<usize> = (0..n).map(|_| lp.add_var(-(mu - x.x()), 0.0, 1.0 / n as f64)).collect();
    let lambda = lp.add_free_var(-1.0);
    let nu = lp.add_free_var(-mu);
    add_asset_rows(&mut lp, problem, &s, lambda, nu);
    lp
}

/// Dual of `min ζ + mean(u)/(1−α)` s.t. `u ≥ −Rw − ζ`, `u ≥ 0`, `Σw = 1`,
/// `r̄ᵀw = μ`. Optimum is `−(CVaR_α − E X)`; the asset-row multipliers are `−w`.
pub fn cvar_dev_dual_lp(problem: &PortfolioProblem, alpha: f64) -> LpProblem {
    let n = problem.n();
    let mu = problem.target_mean;
    let mut lp = LpProblem::new();
    // `Σs = 1` caps each weight at 1, which keeps `α = 1` finite.
    let hi = (1.0 / (n as f64 * (1.0 - alpha))).min(1.0);
    let s: Vec<usize> = (0..n).map(|_| lp.add_var(0.0, 0.0, hi)).collect();
    let lambda = lp.add_free_var(-1.0);
    let nu = lp.add_free_var(-mu);
    lp.set_objective_offset(-mu);
    add_asset_rows(&mut lp, problem, &s, lambda, nu);
    lp.add_row(s.iter().map(|&v| (v, 1.0)), Relation::Eq, 1.0);
    lp
}

/// Primal form of the SE-deviation problem over `(w, u)`; objective `D_x`.
pub fn se_dev_lp(problem: &PortfolioProblem, x: BiasParam) -> LpProblem {
    let (n, m) = (problem.n(), problem.m());
    let mut lp = LpProblem::new();
    let w = add_weight_vars(&mut lp, problem);
    let u: Vec<usize> = (0..n).map(|_| lp.add_var(1.0 / n as f64, 0.0, f64::INFINITY)).collect();
    for i in 0..n {
        let mut row: Vec<(usize, f64)> = (0..m).map(|j| (w[j], problem.returns[(i, j)])).collect();
        row.push((u[i], 1.0));
        lp.add_row(row, Relation::Ge, problem.target_mean - x.x());
    }
    lp.set_objective_offset(-x.minus());
    lp
}

/// Primal form of the CVaR-deviation problem over `(w, ζ, u)`.
pub fn cvar_dev_lp(problem: &PortfolioProblem, alpha: f64) -> LpProblem {
    let (n, m) = (problem.n(), problem.m());
    let mut lp = LpProblem::new();
    let w = add_weight_vars(&mut lp, problem);
    let zeta = lp.add_free_var(1.0);
    let c = 1.0 / (n as f64 * (1.0 - alpha));
    let u: Vec<usize> = (0..n).map(|_| lp.add_var(c, 0.0, f64::INFINITY)).collect();
    for i in 0..n {
        let mut row: Vec<(usize, f64)> = (0..m).map(|j| (w[j], problem.returns[(i, j)])).collect();
        row.push((zeta, 1.0));
        row.push((u[i], 1.0));
        lp.add_row(row, Relation::Ge, 0.0);
    }
    lp.set_objective_offset(problem.target_mean);
    lp
}

fn add_weight_vars(lp: &mut LpProblem, problem: &PortfolioProblem) -> Vec<usize> {
    let lo = if problem.long_only { 0.0 } else { f64::NEG_INFINITY };
    let w: Vec<usize> = (0..problem.m()).map(|_| lp.add_var(0.0, lo, f64::INFINITY)).collect();
    lp.add_row(w.iter().map(|&v| (v, 1.0)), Relation::Eq, 1.0);
    let means = problem.asset_means();
    lp.add_row(w.iter().zip(&means).map(|(&v, &r)| (v, r)), Relation::Eq, problem.target_mean);
    w
}

fn solve_dual(lp: &LpProblem, what: &str) -> Result<LpSolution> {
    let sol = solve_lp(lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Unbounded => Err(CoreError::Infeasible(format!(
            "{what}: target mean is not attainable"
        ))),
        LpStatus::Infeasible => Err(CoreError::Unbounded(format!("{what} is unbounded"))),
        LpStatus::IterationLimit => Err(CoreError::SolverLimit(format!(
            "{what} hit the iteration limit after {} iterations",
            sol.iterations
        ))),
    }
}

fn weights_from(problem: &PortfolioProblem, sol: &LpSolution, what: &str) -> Result<Vec<f64>> {
    let mut w: Vec<f64> = sol.row_duals[..problem.m()].iter().map(|v| -v).collect();
    if problem.long_only {
        for v in &mut w {
            *v = v.max(0.0);
        }
    }
    let budget = w.iter().sum::<f64>() - 1.0;
    let mean: f64 = problem.asset_means().iter().zip(&w).map(|(r, v)| r * v).sum();
    let scale = problem.target_mean.abs().max(1.0);
    if budget.abs() > BUDGET_TOL || (mean - problem.target_mean).abs() > MEAN_TOL * scale {
        return Err(CoreError::Check(format!(
            "{what}: recovered weights miss the budget by {budget:e} and the target mean by {:e}",
            mean - problem.target_mean
        )));
    }
    Ok(w)
}

/// Minimizes `D_x(X) = E[X − E X − x]₊ − x₋`.
pub fn optimize_se_dev(problem: &PortfolioProblem, x: BiasParam) -> Result<PortfolioSolution> {
    let sol = solve_dual(&se_dev_dual_lp(problem, x), "SE-deviation portfolio")?;
    let weights = weights_from(problem, &sol, "SE-deviation portfolio")?;
    let losses = problem.losses(&weights);
    let mass: f64 = sol.x[..problem.n()].iter().sum();
    Ok(PortfolioSolution {
        deviation: biased_mean_deviation(&losses, x),
        alpha_interval: map_x_to_alpha_tol(&losses, x, tie_tol(&losses)),
        losses,
        weights,
        dual_level: (1.0 - mass).clamp(0.0, 1.0),
        lp_iterations: sol.iterations,
    })
}

/// Minimizes `CVaR_α(X) − E X`. The endpoints are accepted: `α = 0` gives
/// zero deviation and `α = 1` minimizes `max X − E X`.
pub fn optimize_cvar_dev(problem: &PortfolioProblem, alpha: ConfidenceLevel) -> Result<PortfolioSolution> {
    let a = alpha.value();
    let sol = solve_dual(&cvar_dev_dual_lp(problem, a), "CVaR-deviation portfolio")?;
    let weights = weights_from(problem, &sol, "CVaR-deviation portfolio")?;
    let losses = problem.losses(&weights);
    Ok(PortfolioSolution {
        deviation: cvar(&losses, alpha) - losses.mean(),
        alpha_interval: (a, a),
        losses,
        weights,
        dual_level: a,
        lp_iterations: sol.iterations,
    })
}

/// Losses this close to the threshold count as ties; LP weights carry
/// rounding noise of this order.
fn tie_tol(losses: &EmpiricalSample) -> f64 {
    1e-12 * losses.min().abs().max(losses.max().abs()).max(1.0)
}

/// `[P(X < x + E X), P(X ≤ x + E X)]`.
pub fn map_x_to_alpha(losses: &EmpiricalSample, x: BiasParam) -> (f64, f64) {
    losses.prob_below(x.x() + losses.mean())
}

/// As [`map_x_to_alpha`], counting losses within `tol` of the threshold as
/// equal to it.
pub fn map_x_to_alpha_tol(losses: &EmpiricalSample, x: BiasParam, tol: f64) -> (f64, f64) {
    let t = x.x() + losses.mean();
    (losses.prob_below(t - tol).0, losses.prob_below(t + tol).1)
}

/// How the CVaR level is picked from an SE-deviation optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelChoice {
    /// `P(X* ≤ x + E X*)`.
    UpperEndpoint,
    /// The saddle level of the SE-deviation dual.
    DualLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub x: f64,
    pub alpha: f64,
    pub alpha_interval: (f64, f64),
    pub se_dev_opt: f64,
    pub cvar_dev_at_se_opt: f64,
    pub cvar_dev_opt: f64,
    pub se_dev_at_cvar_opt: f64,
    /// Solver failure at this point; the numeric fields are NaN.
    pub error: Option<String>,
}

impl SweepRow {
    /// `|cvar_dev_opt − cvar_dev_at_se_opt| / max(1e-12, cvar_dev_opt)`.
    pub fn cvar_gap(&self) -> f64 {
        (self.cvar_dev_opt - self.cvar_dev_at_se_opt).abs() / self.cvar_dev_opt.abs().max(1e-12)
    }

    /// `|se_dev_opt − se_dev_at_cvar_opt| / max(1e-12, |se_dev_opt|)`.
    pub fn se_gap(&self) -> f64 {
        (self.se_dev_opt - self.se_dev_at_cvar_opt).abs() / self.se_dev_opt.abs().max(1e-12)
    }
}

fn sweep_point(problem: &PortfolioProblem, x: f64, choice: LevelChoice) -> Result<SweepRow> {
    let bias = BiasParam(x);
    let se = optimize_se_dev(problem, bias)?;
    let alpha = match choice {
        LevelChoice::UpperEndpoint => se.alpha_interval.1,
        LevelChoice::DualLevel => se.dual_level,
    };
    let level = ConfidenceLevel::new(alpha)?;
    let cv = optimize_cvar_dev(problem, level)?;
    Ok(SweepRow {
        x,
        alpha,
        alpha_interval: se.alpha_interval,
        se_dev_opt: se.deviation,
        cvar_dev_at_se_opt: cvar(&se.losses, level) - se.losses.mean(),
        cvar_dev_opt: cv.deviation,
        se_dev_at_cvar_opt: biased_mean_deviation(&cv.losses, bias),
        error: None,
    })
}

/// Solves both problems at every grid point and cross-evaluates the
/// objectives. Failures are recorded per row.
pub fn equivalence_sweep(problem: &PortfolioProblem, x_grid: &[f64], choice: LevelChoice) -> Result<Vec<SweepRow>> {
    if x_grid.is_empty() {
        return invalid("sweep grid is empty");
    }
    Ok(x_grid
        .iter()
        .map(|&x| {
            sweep_point(problem, x, choice).unwrap_or_else(|e| SweepRow {
                x,
                alpha: f64::NAN,
                alpha_interval: (f64::NAN, f64::NAN),
                se_dev_opt: f64::NAN,
                cvar_dev_at_se_opt: f64::NAN,
                cvar_dev_opt: f64::NAN,
                se_dev_at_cvar_opt: f64::NAN,
                error: Some(e.to_string()),
            })
        })
        .collect())
}

/// `x₀, x₀ + h, …` with `count` points.
pub fn x_grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start + step * k as f64).collect()
}

/// The 25-point grid starting at `−1e−4` with step `0.0020875`.
pub fn default_x_grid() -> Vec<f64> {
    x_grid(-1e-4, 0.0020875, 25)
}

/// Synthetic fat-tailed returns for four assets: a Student-t(4) market
/// factor plus Student-t(4) idiosyncratic terms, both scaled to unit
/// variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticReturnsSpec {
    pub means: Vec<f64>,
    pub betas: Vec<f64>,
    pub factor_sd: f64,
    pub idio_sd: Vec<f64>,
    pub dof: f64,
}

impl Default for SyntheticReturnsSpec {
    fn default() -> Self {
        SyntheticReturnsSpec {
            means: vec![0.006, 0.004, 0.010, 0.002],
            betas: vec![1.0, 0.6, 1.4, 0.2],
            factor_sd: 0.04,
            idio_sd: vec![0.03, 0.02, 0.06, 0.01],
            dof: 4.0,
        }
    }
}

impl SyntheticReturnsSpec {
    /// Average of the asset means, a target every long-only mix can reach.
    pub fn default_target(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.means.len() as f64
    }
}

pub fn synthetic_returns(spec: &SyntheticReturnsSpec, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let m = spec.means.len();
    if m < 2 || spec.betas.len() != m || spec.idio_sd.len() != m {
        return invalid("synthetic returns need matching means, betas and sds for at least two assets");
    }
    if !(spec.dof > 2.0) {
        return invalid(format!("Student-t degrees of freedom must exceed 2, got {}", spec.dof));
    }
    let t = StudentT::new(spec.dof).map_err(|e| CoreError::InvalidInput(e.to_string()))?;
    let unit = ((spec.dof - 2.0) / spec.dof).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = DMatrix::zeros(n, m);
    for i in 0..n {
        let f: f64 = unit * t.sample(&mut rng);
        for j in 0..m {
            let e: f64 = unit * t.sample(&mut rng);
            r[(i, j)] = spec.means[j] + spec.betas[j] * spec.factor_sd * f + spec.idio_sd[j] * e;
        }
    }
    Ok(r)
}

/// Gaussian returns with the given means and a common unit-scale noise; used
/// in tests.
pub fn gaussian_returns(means: &[f64], sd: f64, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, means.len(), |_, j| {
        let z: f64 = StandardNormal.sample(&mut rng);
        means[j] + sd * z
    })
}
