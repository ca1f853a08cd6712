//! Exact quadrangle functionals on empirical samples.
//!
//! All objectives below are piecewise linear in the parameter being
//! optimized, with kinks at atoms (in `x` or `C`) or at values of the CDF
//! (in `α`). Every max/min is therefore taken over the finite kink grid.

use serde::Serialize;

use crate::distributions::EmpiricalSample;
use crate::error::{invalid, CoreError, Result};

/// Probability slack when comparing CDF values against `α`.
const PROB_TOL: f64 = 1e-12;

/// Relative slack for ties between kink values.
fn tie_tol(sample: &EmpiricalSample, extra: f64) -> f64 {
    1e-12 * sample.min().abs().max(sample.max().abs()).max(extra.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarInterval {
    pub lower: f64,
    pub upper: f64,
}

impl VarInterval {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lower - tol && v <= self.upper + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(ConfidenceLevel(alpha))
        } else {
            invalid(format!("confidence level {alpha} outside [0, 1]"))
        }
    }

    /// Rejects the endpoints 0 and 1.
    pub fn open(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(ConfidenceLevel(alpha))
        } else {
            invalid(format!("confidence level {alpha} outside (0, 1)"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasParam(pub f64);

impl BiasParam {
    pub fn x(self) -> f64 {
        self.0
    }

    pub fn plus(self) -> f64 {
        self.0.max(0.0)
    }

    pub fn minus(self) -> f64 {
        (-self.0).max(0.0)
    }
}

impl From<f64> for BiasParam {
    fn from(x: f64) -> Self {
        BiasParam(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Quantile,
    BiasedMean,
    MeanL1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadrangleEval {
    pub family: Family,
    pub param: f64,
    pub risk: f64,
    pub deviation: f64,
    pub regret: f64,
    pub error: f64,
    /// Scalar statistic; for the quantile family the midpoint of the VaR
    /// interval, which is attached in `statistic_interval`.
    pub statistic: f64,
    pub statistic_interval: Option<VarInterval>,
}

pub fn var(sample: &EmpiricalSample, alpha: ConfidenceLevel) -> VarInterval {
    let a = alpha.value();
    let support = sample.support();
    let cdf = sample.cdf_at_support();
    let lower = if a == 0.0 {
        support[0]
    } else {
        let k = cdf.partition_point(|&f| f < a - PROB_TOL);
        support[k.min(support.len() - 1)]
    };
    let upper = if a == 1.0 {
        *support.last().unwrap()
    } else {
        let k = cdf.partition_point(|&f| f <= a + PROB_TOL);
        support[k.min(support.len() - 1)]
    };
    VarInterval { lower, upper }
}

/// `(1−α)·CVaR_α = ∫_α^1 VaR_β dβ`.
pub fn upper_tail_integral(sample: &EmpiricalSample, alpha: f64) -> f64 {
    let mut prev = 0.0f64;
    let mut total = 0.0;
    for (&v, &f) in sample.support().iter().zip(sample.cdf_at_support()) {
        let width = f - prev.max(alpha);
        if width > 0.0 {
            total += v * width;
        }
        prev = f;
    }
    total
}

pub fn cvar(sample: &EmpiricalSample, alpha: ConfidenceLevel) -> f64 {
    let a = alpha.value();
    if a == 0.0 {
        sample.mean()
    } else if a == 1.0 {
        sample.max()
    } else {
        upper_tail_integral(sample, a) / (1.0 - a)
    }
}

/// Minimizes `c + E[X−c]₊/(1−α)` over the atoms. Returns the minimum and the
/// range of atoms attaining it.
pub fn cvar_via_min(sample: &EmpiricalSample, alpha: ConfidenceLevel) -> Result<(f64, VarInterval)> {
    let a = alpha.value();
    if !(a > 0.0 && a < 1.0) {
        return invalid("cvar_via_min needs alpha in (0, 1)");
    }
    let values: Vec<f64> = sample
        .support()
        .iter()
        .map(|&c| c + sample.expect(|v| (v - c).max(0.0)) / (1.0 - a))
        .collect();
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = tie_tol(sample, best) / (1.0 - a);
    let hits: Vec<f64> = sample
        .support()
        .iter()
        .zip(&values)
        .filter(|&(_, &g)| g <= best + tol)
        .map(|(&c, _)| c)
        .collect();
    Ok((
        best,
        VarInterval {
            lower: hits[0],
            upper: *hits.last().unwrap(),
        },
    ))
}

/// `E[X−x]₊ + x`.
pub fn superexpectation(sample: &EmpiricalSample, x: f64) -> f64 {
    sample.expect(|v| (v - x).max(0.0)) + x
}

/// Maximizes `αx + (1−α)CVaR_α(X)` over `α ∈ {0, 1} ∪ {F(atoms)}`. Returns
/// the maximum and the range of maximizing `α`.
pub fn superexpectation_dual(sample: &EmpiricalSample, x: f64) -> (f64, (f64, f64)) {
    let mut grid = vec![0.0];
    grid.extend_from_slice(sample.cdf_at_support());
    let values: Vec<f64> = grid
        .iter()
        .map(|&a| a * x + upper_tail_integral(sample, a))
        .collect();
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = tie_tol(sample, x);
    let hits: Vec<f64> = grid
        .iter()
        .zip(&values)
        .filter(|&(_, &h)| h >= best - tol)
        .map(|(&a, _)| a)
        .collect();
    (best, (hits[0], *hits.last().unwrap()))
}

pub fn eval_quantile_quadrangle(sample: &EmpiricalSample, alpha: ConfidenceLevel) -> Result<QuadrangleEval> {
    let a = alpha.value();
    if !(a > 0.0 && a < 1.0) {
        return invalid("quantile quadrangle needs alpha in (0, 1)");
    }
    let mean = sample.mean();
    let risk = cvar(sample, alpha);
    let regret = sample.expect(|v| v.max(0.0)) / (1.0 - a);
    let error = sample.expect(|v| a / (1.0 - a) * v.max(0.0) + (-v).max(0.0));
    let interval = var(sample, alpha);
    Ok(QuadrangleEval {
        family: Family::Quantile,
        param: a,
        risk,
        deviation: risk - mean,
        regret,
        error,
        statistic: interval.midpoint(),
        statistic_interval: Some(interval),
    })
}

/// Error of the biased mean quadrangle, `max{E[X₋] − x₊, E[X₊] − x₋}`.
pub fn biased_mean_error(sample: &EmpiricalSample, x: BiasParam) -> f64 {
    let neg = sample.expect(|v| (-v).max(0.0));
    let pos = sample.expect(|v| v.max(0.0));
    (neg - x.plus()).max(pos - x.minus())
}

/// Deviation of the biased mean quadrangle, `E[X − E[X] − x]₊ − x₋`.
pub fn biased_mean_deviation(sample: &EmpiricalSample, x: BiasParam) -> f64 {
    let shift = sample.mean() + x.x();
    sample.expect(|v| (v - shift).max(0.0)) - x.minus()
}

pub fn eval_biased_mean_quadrangle(sample: &EmpiricalSample, x: BiasParam) -> QuadrangleEval {
    let mean = sample.mean();
    let deviation = biased_mean_deviation(sample, x);
    let error = biased_mean_error(sample, x);
    QuadrangleEval {
        family: Family::BiasedMean,
        param: x.x(),
        risk: deviation + mean,
        deviation,
        regret: error + mean,
        error,
        statistic: x.x() + mean,
        statistic_interval: None,
    }
}

pub fn eval_mean_l1_quadrangle(sample: &EmpiricalSample) -> QuadrangleEval {
    let mean = sample.mean();
    let deviation = 0.5 * sample.expect(|v| (v - mean).abs());
    let error = 0.5 * sample.expect(f64::abs) + 0.5 * mean.abs();
    QuadrangleEval {
        family: Family::MeanL1,
        param: 0.0,
        risk: deviation + mean,
        deviation,
        regret: error + mean,
        error,
        statistic: mean,
        statistic_interval: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Projection {
    /// `x + E[X]`.
    pub statistic: f64,
    /// Every `C` minimizing `E_x(X − C)`; contains `statistic`.
    pub argmin: VarInterval,
    pub value: f64,
}

/// Minimizes `C ↦ E_x(X − C)` over the kink grid `{atoms} ∪ {x + E[X]}`.
///
/// The minimizer is not unique when the optimum sits on a flat piece (for
/// instance `x + E[X]` beyond the largest atom), so the whole argmin range
/// is returned alongside the statistic.
pub fn error_projection(sample: &EmpiricalSample, x: BiasParam) -> Projection {
    let statistic = x.x() + sample.mean();
    let mut grid: Vec<f64> = sample.support().to_vec();
    let at = grid.partition_point(|&c| c < statistic);
    if grid.get(at) != Some(&statistic) {
        grid.insert(at, statistic);
    }
    let f = |c: f64| {
        let neg = sample.expect(|v| (c - v).max(0.0));
        let pos = sample.expect(|v| (v - c).max(0.0));
        (neg - x.plus()).max(pos - x.minus())
    };
    let values: Vec<f64> = grid.iter().map(|&c| f(c)).collect();
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = tie_tol(sample, statistic);
    let hits: Vec<f64> = grid
        .iter()
        .zip(&values)
        .filter(|&(_, &v)| v <= best + tol)
        .map(|(&c, _)| c)
        .collect();
    Projection {
        statistic,
        argmin: VarInterval {
            lower: hits[0],
            upper: *hits.last().unwrap(),
        },
        value: best,
    }
}

/// `|lhs − rhs|` for the max-over-α representations of the biased mean
/// risk, deviation, regret and error in terms of the quantile quadrangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelationResiduals {
    pub risk: f64,
    pub deviation: f64,
    pub regret: f64,
    pub error: f64,
}

impl RelationResiduals {
    pub fn max(&self) -> f64 {
        self.risk.max(self.deviation).max(self.regret).max(self.error)
    }
}

/// Evaluates the four right-hand maxima on `α ∈ {0, 1} ∪ {F(atoms)}`. The
/// products `(1−α)R_α`, `(1−α)V_α = E[X₊]` and `(1−α)E_α` are used in their
/// continuous form so `α = 1` needs no special case.
pub fn quadrangle_relation_check(sample: &EmpiricalSample, x: BiasParam) -> RelationResiduals {
    let mean = sample.mean();
    let (xp, xm) = (x.plus(), x.minus());
    let pos = sample.expect(|v| v.max(0.0));
    let neg = sample.expect(|v| (-v).max(0.0));
    let mut grid = vec![0.0];
    grid.extend_from_slice(sample.cdf_at_support());

    let mut rhs_r = f64::NEG_INFINITY;
    let mut rhs_d = f64::NEG_INFINITY;
    let mut rhs_v = f64::NEG_INFINITY;
    let mut rhs_e = f64::NEG_INFINITY;
    for &a in &grid {
        let tail = upper_tail_integral(sample, a);
        let w = 1.0 - a;
        rhs_r = rhs_r.max(tail - w * xp + a * (mean - xm));
        rhs_d = rhs_d.max(tail - w * mean - w * xp - a * xm);
        rhs_v = rhs_v.max(pos - w * xp + a * (mean - xm));
        rhs_e = rhs_e.max(a * pos + w * neg - w * xp - a * xm);
    }
    let q = eval_biased_mean_quadrangle(sample, x);
    RelationResiduals {
        risk: (q.risk - rhs_r).abs(),
        deviation: (q.deviation - rhs_d).abs(),
        regret: (q.regret - rhs_v).abs(),
        error: (q.error - rhs_e).abs(),
    }
}

/// Scaling `λ` with `E_x(λX) > 0`, following the two cases in which
/// `E_x(X) ≤ 0` can happen for nonzero `X` (margin 1).
pub fn subregularity_probe(sample: &EmpiricalSample, x: BiasParam) -> Result<(f64, f64)> {
    if sample.is_zero() {
        return invalid("subregularity probe needs a nonzero sample");
    }
    let e = biased_mean_error(sample, x);
    if e > 0.0 {
        return Ok((1.0, e));
    }
    let lambda = if x.x() > 0.0 {
        x.x() / sample.expect(|v| (-v).max(0.0)) + 1.0
    } else {
        -x.x() / sample.expect(|v| v.max(0.0)) + 1.0
    };
    let scaled = sample.map(|v| lambda * v);
    let e_scaled = biased_mean_error(&scaled, x);
    if !(e_scaled > 0.0) {
        return Err(CoreError::Check(format!(
            "E_x(λX) = {e_scaled} at λ = {lambda} is not positive"
        )));
    }
    Ok((lambda, e_scaled))
}
