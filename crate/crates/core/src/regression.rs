//! Sample-average regression fitters.
//!
//! Quantile, biased-mean and superexpectation regressions are solved as LPs
//! over the free intercept and coefficients; OLS goes through the normal
//! equations on centered columns.

use nalgebra::{DMatrix, DVector};
use quadlab_lp::{solve_lp, LpProblem, LpSolution, LpStatus, Relation};
use serde::Serialize;

use crate::error::{invalid, CoreError, Result};
use crate::functionals::{BiasParam, ConfidenceLevel};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    design: DMatrix<f64>,
    response: DVector<f64>,
}

impl Dataset {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        if response.is_empty() {
            return invalid("dataset needs at least one observation");
        }
        if design.nrows() != response.len() {
            return invalid(format!(
                "design has {} rows but response has {} entries",
                design.nrows(),
                response.len()
            ));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return invalid("dataset contains non-finite entries");
        }
        Ok(Dataset { design, response })
    }

    /// Intercept-only dataset (`d = 0`).
    pub fn response_only(y: &[f64]) -> Result<Self> {
        Self::new(DMatrix::zeros(y.len(), 0), DVector::from_column_slice(y))
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn d(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    /// Dataset restricted to the given columns, in that order.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            design: self.design.select_columns(cols),
            response: self.response.clone(),
        }
    }

    fn response_scale(&self) -> f64 {
        self.response.amax().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn zero(d: usize) -> Self {
        LinearModel {
            intercept: 0.0,
            coefficients: vec![0.0; d],
        }
    }

    pub fn predict_row(&self, data: &Dataset, i: usize) -> f64 {
        let mut f = self.intercept;
        for (j, &c) in self.coefficients.iter().enumerate() {
            f += c * data.design[(i, j)];
        }
        f
    }
}

/// `zᵢ = yᵢ − c₀ − cᵀxᵢ`.
pub fn residuals(model: &LinearModel, data: &Dataset) -> Vec<f64> {
    (0..data.n())
        .map(|i| data.response[i] - model.predict_row(data, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub model: LinearModel,
    /// Error of the fitted residuals in the fitter's own units.
    pub objective: f64,
    /// Optimal value reported by the LP (equal to `objective` up to solver
    /// tolerance); `None` for OLS.
    pub lp_objective: Option<f64>,
    pub lp_iterations: usize,
    /// OLS only: the normal equations needed a ridge term.
    pub regularized: bool,
    /// Biased-mean and SE fits: `1 − μ` for the weight `μ` of the dual box LP.
    /// The fitted model solves the quantile regression at this level, which
    /// lies in the induced interval of the residuals.
    pub dual_level: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Normalized Koenker–Bassett error `mean(α/(1−α)·z₊ + z₋)`.
pub fn kb_error(z: &[f64], alpha: f64) -> f64 {
    let k = alpha / (1.0 - alpha);
    mean(&z.iter().map(|&v| k * v.max(0.0) + (-v).max(0.0)).collect::<Vec<_>>())
}

/// Superexpectation error `max{mean z₋ − x₊, mean z₊ − x₋}`.
pub fn se_error(z: &[f64], x: BiasParam) -> f64 {
    let pos = mean(&z.iter().map(|&v| v.max(0.0)).collect::<Vec<_>>());
    let neg = mean(&z.iter().map(|&v| (-v).max(0.0)).collect::<Vec<_>>());
    (neg - x.plus()).max(pos - x.minus())
}

pub fn mse(z: &[f64]) -> f64 {
    mean(&z.iter().map(|v| v * v).collect::<Vec<_>>())
}

/// `[P(z < 0), P(z ≤ 0)]` as exact empirical fractions.
pub fn induced_alpha(z: &[f64]) -> (f64, f64) {
    induced_alpha_tol(z, 0.0)
}

/// As [`induced_alpha`], counting `|zᵢ| ≤ zero_tol` as zero.
pub fn induced_alpha_tol(z: &[f64], zero_tol: f64) -> (f64, f64) {
    let n = z.len() as f64;
    let below = z.iter().filter(|&&v| v < -zero_tol).count() as f64;
    let at_or_below = z.iter().filter(|&&v| v <= zero_tol).count() as f64;
    (below / n, at_or_below / n)
}

/// Zero tolerance used when reading induced levels off LP residuals.
pub fn residual_zero_tol(data: &Dataset) -> f64 {
    1e-9 * data.response_scale()
}

pub fn fit_ols(data: &Dataset) -> Fit {
    let d = data.d();
    let y = &data.response;
    let y_mean = y.mean();
    if d == 0 {
        let model = LinearModel {
            intercept: y_mean,
            coefficients: Vec::new(),
        };
        let z = residuals(&model, data);
        return Fit {
            model,
            objective: mse(&z),
            lp_objective: None,
            lp_iterations: 0,
            regularized: false,
            dual_level: None,
        };
    }
    let x_mean: DVector<f64> = DVector::from_fn(d, |j, _| data.design.column(j).mean());
    let mut xc = data.design.clone();
    for j in 0..d {
        let m = x_mean[j];
        xc.column_mut(j).add_scalar_mut(-m);
    }
    let yc = y.add_scalar(-y_mean);
    let gram = xc.tr_mul(&xc);
    let rhs = xc.tr_mul(&yc);
    // A Cholesky factor with a negligible pivot counts as a failure too.
    let floor = 1e-12 * gram.diagonal().max().max(f64::MIN_POSITIVE);
    let factor = gram
        .clone()
        .cholesky()
        .filter(|ch| ch.l_dirty().diagonal().iter().all(|&v| v * v > floor));
    let (c, regularized) = match factor {
        Some(ch) => (ch.solve(&rhs), false),
        None => {
            let ridge = 1e-10 * gram.trace().max(f64::MIN_POSITIVE) / d as f64;
            let mut g = gram;
            for j in 0..d {
                g[(j, j)] += ridge;
            }
            let c = g
                .cholesky()
                .map(|ch| ch.solve(&rhs))
                .unwrap_or_else(|| DVector::zeros(d));
            (c, true)
        }
    };
    let model = LinearModel {
        intercept: y_mean - c.dot(&x_mean),
        coefficients: c.iter().copied().collect(),
    };
    let z = residuals(&model, data);
    Fit {
        model,
        objective: mse(&z),
        lp_objective: None,
        lp_iterations: 0,
        regularized,
        dual_level: None,
    }
}

/// Free intercept and coefficients, variables `0..=d`.
fn add_model_vars(lp: &mut LpProblem, d: usize) -> Vec<usize> {
    (0..=d).map(|_| lp.add_free_var(0.0)).collect()
}

/// Row terms `c₀ + cᵀxᵢ` for observation `i`.
fn model_terms(data: &Dataset, vars: &[usize], i: usize) -> Vec<(usize, f64)> {
    let mut row = Vec::with_capacity(vars.len() + 2);
    row.push((vars[0], 1.0));
    for j in 0..data.d() {
        row.push((vars[j + 1], data.design[(i, j)]));
    }
    row
}

fn require_optimal(sol: &LpSolution, what: &str) -> Result<()> {
    match sol.status {
        LpStatus::Optimal => Ok(()),
        LpStatus::Infeasible => Err(CoreError::Infeasible(format!("{what} LP is infeasible"))),
        LpStatus::Unbounded => Err(CoreError::Unbounded(format!("{what} LP is unbounded"))),
        LpStatus::IterationLimit => Err(CoreError::SolverLimit(format!(
            "{what} LP hit the iteration limit after {} iterations",
            sol.iterations
        ))),
    }
}

/// Residual bounds `pᵢ ≥ zᵢ` and `qᵢ ≥ −zᵢ` with `p, q ≥ 0`; returns `(p, q)`.
fn add_residual_parts(lp: &mut LpProblem, data: &Dataset, vars: &[usize], cost_p: f64, cost_q: f64) -> (Vec<usize>, Vec<usize>) {
    let n = data.n();
    let p: Vec<usize> = (0..n).map(|_| lp.add_var(cost_p, 0.0, f64::INFINITY)).collect();
    let q: Vec<usize> = (0..n).map(|_| lp.add_var(cost_q, 0.0, f64::INFINITY)).collect();
    for i in 0..n {
        let mut row = model_terms(data, vars, i);
        row.push((p[i], 1.0));
        lp.add_row(row, Relation::Ge, data.response[i]);
        let mut row: Vec<(usize, f64)> = model_terms(data, vars, i).into_iter().map(|(j, a)| (j, -a)).collect();
        row.push((q[i], 1.0));
        lp.add_row(row, Relation::Ge, -data.response[i]);
    }
    (p, q)
}

/// Quantile regression LP for `min mean(α/(1−α)·z₊ + z₋)`.
pub fn quantile_lp(data: &Dataset, alpha: f64) -> LpProblem {
    let n = data.n() as f64;
    let mut lp = LpProblem::new();
    let vars = add_model_vars(&mut lp, data.d());
    add_residual_parts(&mut lp, data, &vars, alpha / (1.0 - alpha) / n, 1.0 / n);
    lp
}

/// Dual of [`quantile_lp`] in box form: `s ∈ [0, 1/(n(1−α))]ⁿ`,
/// `X̃ᵀs = mean(X̃)` with `X̃ = [1 X]`, minimizing `ȳ − yᵀs`. Its optimum is the
/// negated quantile objective and the row multipliers are `−(c₀, c)`.
pub fn quantile_dual_lp(data: &Dataset, alpha: f64) -> LpProblem {
    let n = data.n();
    let hi = 1.0 / (n as f64 * (1.0 - alpha));
    let mut lp = LpProblem::new();
    let s: Vec<usize> = (0..n).map(|i| lp.add_var(-data.response[i], 0.0, hi)).collect();
    lp.set_objective_offset(data.response.mean());
    add_design_rows(&mut lp, data, &s, None);
    lp
}

/// Rows `Σᵢ x̃ᵢⱼ sᵢ − μ·mean(x̃ⱼ) = 0`, or `= mean(x̃ⱼ)` without `μ`.
fn add_design_rows(lp: &mut LpProblem, data: &Dataset, s: &[usize], mu: Option<usize>) {
    for j in 0..=data.d() {
        let col = |i: usize| if j == 0 { 1.0 } else { data.design[(i, j - 1)] };
        let m = (0..data.n()).map(col).sum::<f64>() / data.n() as f64;
        let mut row: Vec<(usize, f64)> = s.iter().enumerate().map(|(i, &v)| (v, col(i))).collect();
        match mu {
            Some(mu) => {
                row.push((mu, -m));
                lp.add_row(row, Relation::Eq, 0.0);
            }
            None => {
                lp.add_row(row, Relation::Eq, m);
            }
        }
    }
}

fn model_from_duals(sol: &LpSolution) -> LinearModel {
    LinearModel {
        intercept: -sol.row_duals[0],
        coefficients: sol.row_duals[1..].iter().map(|v| -v).collect(),
    }
}

pub fn fit_quantile(data: &Dataset, alpha: ConfidenceLevel) -> Result<Fit> {
    let a = alpha.value();
    if !(a > 0.0 && a < 1.0) {
        return invalid("quantile regression needs alpha in (0, 1)");
    }
    let sol = solve_lp(&quantile_dual_lp(data, a))?;
    require_optimal(&sol, "quantile regression")?;
    let model = model_from_duals(&sol);
    let z = residuals(&model, data);
    Ok(Fit {
        objective: kb_error(&z, a),
        model,
        lp_objective: Some(-sol.objective),
        lp_iterations: sol.iterations,
        regularized: false,
        dual_level: None,
    })
}

/// Biased-mean regression LP: `p ≥ z₊`, `q ≥ z₋` and an epigraph variable
/// `t ≥ mean(q) − x₊`, `t ≥ mean(p) − x₋`.
pub fn biased_mean_lp(data: &Dataset, x: BiasParam) -> LpProblem {
    let n = data.n();
    let mut lp = LpProblem::new();
    let vars = add_model_vars(&mut lp, data.d());
    let (p, q) = add_residual_parts(&mut lp, data, &vars, 0.0, 0.0);
    let t = lp.add_free_var(1.0);
    let w = 1.0 / n as f64;
    lp.add_row(
        std::iter::once((t, 1.0)).chain(q.iter().map(|&v| (v, -w))),
        Relation::Ge,
        -x.plus(),
    );
    lp.add_row(
        std::iter::once((t, 1.0)).chain(p.iter().map(|&v| (v, -w))),
        Relation::Ge,
        -x.minus(),
    );
    lp
}

/// Shifts the intercept so that `mean(z) = −x` exactly. The SE error is
/// minimized over intercepts at `C = x + mean(z)`, so the shift never
/// increases it.
fn recentre(model: &mut LinearModel, data: &Dataset, x: f64) {
    let z = residuals(model, data);
    model.intercept += mean(&z) + x;
}

/// Dual of [`biased_mean_lp`] in box form: `s ∈ [0, 1/n]ⁿ`, `μ ∈ [0, 1]`,
/// `X̃ᵀs = μ·mean(X̃)`, minimizing `x₋ + (x + ȳ)μ − yᵀs`. Its optimum is the
/// negated biased-mean objective and the row multipliers are `−(c₀, c)`.
pub fn biased_mean_dual_lp(data: &Dataset, x: BiasParam) -> LpProblem {
    let n = data.n();
    let mut lp = LpProblem::new();
    let s: Vec<usize> = (0..n)
        .map(|i| lp.add_var(-data.response[i], 0.0, 1.0 / n as f64))
        .collect();
    let mu = lp.add_var(x.x() + data.response.mean(), 0.0, 1.0);
    lp.set_objective_offset(x.minus());
    add_design_rows(&mut lp, data, &s, Some(mu));
    lp
}

pub fn fit_biased_mean(data: &Dataset, x: BiasParam) -> Result<Fit> {
    let sol = solve_lp(&biased_mean_dual_lp(data, x))?;
    require_optimal(&sol, "biased mean regression")?;
    let mut model = model_from_duals(&sol);
    let scale = data.response_scale();
    let before = se_error(&residuals(&model, data), x);
    recentre(&mut model, data, x.x());
    let z = residuals(&model, data);
    let objective = se_error(&z, x);
    if objective > before + 1e-9 * scale {
        return Err(CoreError::Check(format!(
            "recentring raised the error from {before} to {objective}"
        )));
    }
    Ok(Fit {
        model,
        objective,
        lp_objective: Some(-sol.objective),
        lp_iterations: sol.iterations,
        regularized: false,
        dual_level: Some(1.0 - sol.x[data.n()]),
    })
}

/// Superexpectation regression LP with `u ≥ z₊` and
/// `t ≥ mean(u)`, `t ≥ mean(u) − mean(z)`.
pub fn se_lp(data: &Dataset) -> LpProblem {
    let (n, d) = (data.n(), data.d());
    let w = 1.0 / n as f64;
    let mut lp = LpProblem::new();
    let vars = add_model_vars(&mut lp, d);
    let t = lp.add_free_var(1.0);
    let u: Vec<usize> = (0..n).map(|_| lp.add_var(0.0, 0.0, f64::INFINITY)).collect();
    for i in 0..n {
        let mut row = model_terms(data, &vars, i);
        row.push((u[i], 1.0));
        lp.add_row(row, Relation::Ge, data.response[i]);
    }
    lp.add_row(
        std::iter::once((t, 1.0)).chain(u.iter().map(|&v| (v, -w))),
        Relation::Ge,
        0.0,
    );
    let x_mean: Vec<f64> = (0..d).map(|j| data.design.column(j).mean()).collect();
    let mut row = vec![(t, 1.0), (vars[0], -1.0)];
    row.extend((0..d).map(|j| (vars[j + 1], -x_mean[j])));
    row.extend(u.iter().map(|&v| (v, -w)));
    lp.add_row(row, Relation::Ge, -data.response.mean());
    lp
}

/// Dual of [`se_lp`]. Eliminating `t` leaves exactly the box LP of
/// [`biased_mean_dual_lp`] at `x = 0`.
pub fn se_dual_lp(data: &Dataset) -> LpProblem {
    biased_mean_dual_lp(data, BiasParam(0.0))
}

pub fn fit_se(data: &Dataset) -> Result<Fit> {
    let sol = solve_lp(&se_dual_lp(data))?;
    require_optimal(&sol, "superexpectation regression")?;
    let mut model = model_from_duals(&sol);
    let scale = data.response_scale();
    let before = se_error(&residuals(&model, data), BiasParam(0.0));
    recentre(&mut model, data, 0.0);
    let z = residuals(&model, data);
    let objective = se_error(&z, BiasParam(0.0));
    if objective > before + 1e-9 * scale {
        return Err(CoreError::Check(format!(
            "recentring raised the error from {before} to {objective}"
        )));
    }
    Ok(Fit {
        model,
        objective,
        lp_objective: Some(-sol.objective),
        lp_iterations: sol.iterations,
        regularized: false,
        dual_level: Some(1.0 - sol.x[data.n()]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewsvendorSpec {
    /// Unit buying cost.
    pub gamma: f64,
    /// Unit selling price.
    pub delta: f64,
}

impl NewsvendorSpec {
    pub fn alpha(&self) -> Result<f64> {
        if !(self.gamma > 0.0 && self.delta > self.gamma && self.delta.is_finite()) {
            return invalid(format!(
                "need selling price > buying cost > 0, got gamma={} delta={}",
                self.gamma, self.delta
            ));
        }
        Ok(1.0 - self.gamma / self.delta)
    }
}

/// Order policy for given prices: quantile regression at `α = 1 − γ/δ`.
pub fn newsvendor_policy(data: &Dataset, spec: NewsvendorSpec) -> Result<(Fit, f64)> {
    let alpha = spec.alpha()?;
    Ok((fit_quantile(data, ConfidenceLevel::open(alpha)?)?, alpha))
}

/// Price consistent with a target bias `x`: fits the biased-mean regression,
/// takes `α* = P(z ≤ 0)` and returns `δ = γ/(1 − α*)`.
pub fn newsvendor_price(data: &Dataset, x: BiasParam, gamma: f64) -> Result<(Fit, f64, f64)> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return invalid(format!("buying cost must be positive, got {gamma}"));
    }
    let fit = fit_biased_mean(data, x)?;
    let z = residuals(&fit.model, data);
    let (_, alpha) = induced_alpha_tol(&z, residual_zero_tol(data));
    if alpha >= 1.0 {
        return invalid("induced level is 1; no finite price realizes it");
    }
    Ok((fit, alpha, gamma / (1.0 - alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data() -> Dataset {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let y = DVector::from_column_slice(&[1.0, 3.0, 5.0, 7.0]);
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn ols_examples() {
        let f = fit_ols(&line_data());
        assert!((f.model.intercept - 1.0).abs() < 1e-12);
        assert!((f.model.coefficients[0] - 2.0).abs() < 1e-12);
        let f = fit_ols(&Dataset::response_only(&[1.0, 2.0, 6.0]).unwrap());
        assert_eq!(f.model.intercept, 3.0);
        let two = Dataset::new(
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            DVector::from_column_slice(&[0.0, 1.0]),
        )
        .unwrap();
        let f = fit_ols(&two);
        assert!(f.model.intercept.abs() < 1e-12 && (f.model.coefficients[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_flags_collinear_design() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let f = fit_ols(&Dataset::new(x, y).unwrap());
        assert!(f.regularized);
        assert!(f.objective < 1e-10);
    }

    #[test]
    fn quantile_intercept_only_median() {
        let data = Dataset::response_only(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let f = fit_quantile(&data, ConfidenceLevel::open(0.5).unwrap()).unwrap();
        assert!((2.0..=3.0).contains(&f.model.intercept));
        assert!((f.objective - 1.0).abs() < 1e-12);
        let flat = Dataset::response_only(&[2.5; 5]).unwrap();
        let f = fit_quantile(&flat, ConfidenceLevel::open(0.3).unwrap()).unwrap();
        assert!((f.model.intercept - 2.5).abs() < 1e-12 && f.objective.abs() < 1e-12);
    }

    #[test]
    fn biased_mean_intercept_only() {
        let data = Dataset::response_only(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        for x in [-0.5, 0.0, 0.3, 5.0] {
            let f = fit_biased_mean(&data, BiasParam(x)).unwrap();
            assert!((f.model.intercept - (2.5 + x)).abs() < 1e-12, "x={x}");
        }
        let f = fit_se(&data).unwrap();
        assert!((f.model.intercept - 2.5).abs() < 1e-12);
        assert!((f.objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_fits_have_zero_error() {
        let data = line_data();
        assert!(fit_se(&data).unwrap().objective.abs() < 1e-12);
        assert!(fit_biased_mean(&data, BiasParam(0.0)).unwrap().objective.abs() < 1e-12);
        let zero = Dataset::response_only(&[0.0; 3]).unwrap();
        let f = fit_se(&zero).unwrap();
        assert_eq!(f.model, LinearModel::zero(0));
    }

    #[test]
    fn induced_alpha_examples() {
        assert_eq!(induced_alpha(&[-1.0, -1.0, 1.0]), (2.0 / 3.0, 2.0 / 3.0));
        assert_eq!(induced_alpha(&[-2.0, -1.0, 0.0, 1.0]), (0.5, 0.75));
        assert_eq!(induced_alpha(&[1.0, 2.0]), (0.0, 0.0));
    }

    #[test]
    fn residual_examples() {
        let data = Dataset::response_only(&[2.0]).unwrap();
        let m = LinearModel {
            intercept: 1.0,
            coefficients: vec![],
        };
        assert_eq!(residuals(&m, &data), vec![1.0]);
    }

    #[test]
    fn newsvendor_examples() {
        let data = Dataset::response_only(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let (fit, a) = newsvendor_policy(&data, NewsvendorSpec { gamma: 1.0, delta: 2.0 }).unwrap();
        assert_eq!(a, 0.5);
        assert!((fit.model.intercept - 3.0).abs() < 1e-12);
        assert!(newsvendor_policy(&data, NewsvendorSpec { gamma: 2.0, delta: 2.0 }).is_err());

        let sym = Dataset::response_only(&[-2.0, -1.0, 1.0, 2.0]).unwrap();
        let (_, a, delta) = newsvendor_price(&sym, BiasParam(0.0), 1.0).unwrap();
        assert_eq!((a, delta), (0.5, 2.0));
        assert!(newsvendor_price(&sym, BiasParam(10.0), 1.0).is_err());
    }
}
