//! Empirical samples and the seeded generators used by the experiments.
//!
//! Every generator takes an explicit `u64` seed and draws from ChaCha8, so
//! output is bit-identical across runs on the same build. Replication `i` of
//! an experiment seeded with `base` uses [`replication_seed`]`(base, i)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{invalid, CoreError, Result};

/// Finite discrete distribution.
///
/// The atoms keep their input order (coupled samples rely on it); a sorted
/// copy with equal atoms merged and zero-probability atoms dropped backs the
/// order statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalSample {
    atoms: Vec<f64>,
    probs: Vec<f64>,
    #[serde(skip)]
    support: Vec<f64>,
    #[serde(skip)]
    cdf: Vec<f64>,
}

pub fn make_sample(values: &[f64], weights: Option<&[f64]>) -> Result<EmpiricalSample> {
    if values.is_empty() {
        return invalid("sample needs at least one value");
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return invalid(format!("value {i} is not finite"));
    }
    let probs = match weights {
        None => vec![1.0 / values.len() as f64; values.len()],
        Some(w) => {
            if w.len() != values.len() {
                return invalid(format!("{} weights for {} values", w.len(), values.len()));
            }
            if let Some(i) = w.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
                return invalid(format!("weight {i} is negative or not finite"));
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return invalid("weights sum to zero");
            }
            w.iter().map(|&v| v / total).collect()
        }
    };
    Ok(EmpiricalSample::from_parts(values.to_vec(), probs))
}

impl EmpiricalSample {
    fn from_parts(atoms: Vec<f64>, probs: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..atoms.len()).filter(|&i| probs[i] > 0.0).collect();
        order.sort_by(|&a, &b| atoms[a].total_cmp(&atoms[b]));
        let mut support: Vec<f64> = Vec::with_capacity(order.len());
        let mut mass: Vec<f64> = Vec::with_capacity(order.len());
        for i in order {
            if support.last() == Some(&atoms[i]) {
                *mass.last_mut().unwrap() += probs[i];
            } else {
                support.push(atoms[i]);
                mass.push(probs[i]);
            }
        }
        let mut cdf = Vec::with_capacity(mass.len());
        let mut acc = 0.0;
        for p in mass {
            acc += p;
            cdf.push(acc);
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        EmpiricalSample {
            atoms,
            probs,
            support,
            cdf,
        }
    }

    /// Equal-weight sample; panics on empty or non-finite input.
    pub fn uniform(values: &[f64]) -> Self {
        make_sample(values, None).expect("valid uniform sample")
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Distinct atoms with positive probability, ascending.
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// `F` evaluated at each support point (last entry exactly 1).
    pub fn cdf_at_support(&self) -> &[f64] {
        &self.cdf
    }

    pub fn mean(&self) -> f64 {
        self.expect(|v| v)
    }

    /// `E[f(X)]`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().zip(&self.probs).map(|(&v, &p)| p * f(v)).sum()
    }

    pub fn min(&self) -> f64 {
        self.support[0]
    }

    pub fn max(&self) -> f64 {
        *self.support.last().unwrap()
    }

    /// `P(X < t)` and `P(X ≤ t)`.
    pub fn prob_below(&self, t: f64) -> (f64, f64) {
        let below = self.support.partition_point(|&v| v < t);
        let at_or_below = self.support.partition_point(|&v| v <= t);
        let f = |k: usize| if k == 0 { 0.0 } else { self.cdf[k - 1] };
        (f(below), f(at_or_below))
    }

    /// Atomwise image `f(X)` with the same probabilities.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.atoms.iter().map(|&v| f(v)).collect(), self.probs.clone())
    }

    /// Atomwise combination of two samples on the same probability space.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.probs != other.probs {
            return invalid("samples do not share atom probabilities");
        }
        Ok(Self::from_parts(
            self.atoms.iter().zip(&other.atoms).map(|(&a, &b)| f(a, b)).collect(),
            self.probs.clone(),
        ))
    }

    /// True when every atom with positive probability is zero.
    pub fn is_zero(&self) -> bool {
        self.support.iter().all(|&v| v == 0.0)
    }
}

/// Seed for replication `index` of a run seeded with `base`.
pub fn replication_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn sample_standard_normal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, 0);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkewNormalSpec {
    pub shape: f64,
    /// Shift and scale by the population mean and standard deviation.
    pub standardized: bool,
}

impl SkewNormalSpec {
    pub fn delta(&self) -> f64 {
        self.shape / (1.0 + self.shape * self.shape).sqrt()
    }

    /// Mean `δ√(2/π)` of the unstandardized law.
    pub fn raw_mean(&self) -> f64 {
        self.delta() * std::f64::consts::FRAC_2_PI.sqrt()
    }

    /// Standard deviation `√(1 − 2δ²/π)` of the unstandardized law.
    pub fn raw_sd(&self) -> f64 {
        let d = self.delta();
        (1.0 - d * d * std::f64::consts::FRAC_2_PI).sqrt()
    }
}

/// Draws `δ|U₀| + √(1−δ²)U₁`. `U₁` comes from the same stream as
/// [`sample_standard_normal`], so shape 0 reproduces it exactly.
pub fn sample_skew_normal(spec: SkewNormalSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return invalid("n must be positive");
    }
    if !spec.shape.is_finite() {
        return invalid("shape must be finite");
    }
    let delta = spec.delta();
    let tail = (1.0 - delta * delta).sqrt();
    let (shift, scale) = if spec.standardized {
        (spec.raw_mean(), spec.raw_sd())
    } else {
        (0.0, 1.0)
    };
    let mut main = stream(seed, 0);
    let mut fold = stream(seed, 1);
    Ok((0..n)
        .map(|_| {
            let u1: f64 = StandardNormal.sample(&mut main);
            let u0: f64 = StandardNormal.sample(&mut fold);
            (delta * u0.abs() + tail * u1 - shift) / scale
        })
        .collect())
}

fn std_normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

fn skew_normal_pdf(z: f64, a: f64) -> f64 {
    let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    2.0 * phi * std_normal_cdf(a * z)
}

/// `F_ε(0)` for the standardized skew normal with shape `a`, i.e. the raw
/// law's CDF at its mean, by adaptive Simpson quadrature from −12.
pub fn skew_normal_cdf_at_zero(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return invalid("shape must be finite");
    }
    let upper = SkewNormalSpec {
        shape: a,
        standardized: true,
    }
    .raw_mean();
    adaptive_simpson(|z| skew_normal_pdf(z, a), -12.0, upper, 1e-10, 50)
}

fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Option<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let diff = left + right - whole;
        if diff.abs() <= 15.0 * tol {
            return Some(left + right + diff / 15.0);
        }
        if depth == 0 {
            return None;
        }
        Some(
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?,
        )
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(&f, a, b, fa, fm, fb, whole, tol, max_depth).ok_or_else(|| {
        CoreError::Quadrature(format!("adaptive Simpson on [{a}, {b}] exceeded depth {max_depth}"))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignSpec {
    pub d: usize,
    pub rho: f64,
}

impl DesignSpec {
    /// `Σᵢⱼ = ρ^|i−j|`.
    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| self.rho.powi(i.abs_diff(j) as i32))
    }
}

/// `n` i.i.d. rows from `N(0, Σ)` with the AR(1) covariance of `spec`.
pub fn sample_correlated_design(spec: DesignSpec, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return invalid("n must be positive");
    }
    if spec.d == 0 {
        return invalid("dimension must be positive");
    }
    if !(spec.rho.abs() < 1.0) {
        return invalid(format!("|rho| must be below 1, got {}", spec.rho));
    }
    let chol = spec
        .covariance()
        .cholesky()
        .ok_or_else(|| CoreError::InvalidInput("covariance is not positive definite".into()))?;
    let l = chol.l();
    let mut rng = stream(seed, 0);
    let mut out = DMatrix::zeros(n, spec.d);
    let mut g = DVector::zeros(spec.d);
    for i in 0..n {
        for v in g.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let row = &l * &g;
        for j in 0..spec.d {
            out[(i, j)] = row[j];
        }
    }
    Ok(out)
}
