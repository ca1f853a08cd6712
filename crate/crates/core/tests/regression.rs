use nalgebra::{DMatrix, DVector};
use quadlab_core::functionals::{BiasParam, ConfidenceLevel};
use quadlab_core::regression::*;
use quadlab_lp::{solve_lp, LpStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let exp = Exp::new(1.0).unwrap();
    let y = DVector::from_fn(n, |i, _| {
        let mut v = 0.3;
        for j in 0..d {
            v += beta[j] * x[(i, j)];
        }
        v + exp.sample(rng) - 1.0
    });
    Dataset::new(x, y).unwrap()
}

fn line(n: usize) -> Dataset {
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    Dataset::new(DMatrix::from_column_slice(n, 1, &x), DVector::from_column_slice(&y)).unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[test]
fn ols_examples() {
    let f = fit_ols(&line(5));
    assert!((f.model.intercept - 1.0).abs() < 1e-10);
    assert!((f.model.coefficients[0] - 2.0).abs() < 1e-10);
    let two = Dataset::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0]), DVector::from_column_slice(&[0.0, 1.0])).unwrap();
    let f = fit_ols(&two);
    assert!(f.model.intercept.abs() < 1e-12 && (f.model.coefficients[0] - 1.0).abs() < 1e-12);
    let f = fit_ols(&Dataset::response_only(&[1.0, 2.0, 6.0]).unwrap());
    assert!((f.model.intercept - 3.0).abs() < 1e-12);
}

#[test]
fn ols_satisfies_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = rng.random_range(10..200);
        let d = rng.random_range(0..6);
        let data = random_dataset(&mut rng, n, d);
        let f = fit_ols(&data);
        assert!(!f.regularized);
        let z = residuals(&f.model, &data);
        let scale = data.response().norm() * (1.0 + data.design().norm());
        assert!(z.iter().sum::<f64>().abs() <= 1e-8 * scale);
        for j in 0..d {
            let g: f64 = (0..n).map(|i| data.design()[(i, j)] * z[i]).sum();
            assert!(g.abs() <= 1e-8 * scale, "gradient {g} on column {j}");
        }
    }
}

#[test]
fn residuals_examples() {
    let data = Dataset::response_only(&[2.0]).unwrap();
    let m = LinearModel { intercept: 1.0, coefficients: vec![] };
    assert_eq!(residuals(&m, &data), vec![1.0]);
    let zero = Dataset::new(DMatrix::zeros(3, 2), DVector::zeros(3)).unwrap();
    assert_eq!(residuals(&LinearModel::zero(2), &zero), vec![0.0; 3]);
    let f = fit_ols(&line(4));
    assert!(residuals(&f.model, &line(4)).iter().all(|z| z.abs() < 1e-10));
}

#[test]
fn quantile_examples() {
    let data = Dataset::response_only(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    let f = fit_quantile(&data, ConfidenceLevel::open(0.5).unwrap()).unwrap();
    assert!((2.0..=3.0).contains(&f.model.intercept));
    assert!((f.objective - 1.0).abs() < 1e-12);
    let flat = Dataset::response_only(&[7.0; 5]).unwrap();
    let f = fit_quantile(&flat, ConfidenceLevel::open(0.9).unwrap()).unwrap();
    assert!((f.model.intercept - 7.0).abs() < 1e-12 && f.objective.abs() < 1e-12);
    let f = fit_quantile(&line(6), ConfidenceLevel::open(0.3).unwrap()).unwrap();
    assert!(f.objective.abs() < 1e-10);
    assert!((f.model.coefficients[0] - 2.0).abs() < 1e-9);
}

#[test]
fn quantile_matches_primal_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let n = rng.random_range(5..80);
        let d = rng.random_range(0..4);
        let data = random_dataset(&mut rng, n, d);
        let alpha = rng.random_range(0.05..0.95);
        let f = fit_quantile(&data, ConfidenceLevel::open(alpha).unwrap()).unwrap();
        let primal = solve_lp(&quantile_lp(&data, alpha)).unwrap();
        assert_eq!(primal.status, LpStatus::Optimal);
        assert!(rel(f.objective, primal.objective) < 1e-8, "{} vs {}", f.objective, primal.objective);
        assert!(rel(f.objective, f.lp_objective.unwrap()) < 1e-8);
    }
}

#[test]
fn biased_mean_examples() {
    let data = Dataset::response_only(&[1.0, 2.0, 3.0, 5.0]).unwrap();
    for x in [-1.0, 0.0, 0.25, 3.0] {
        let f = fit_biased_mean(&data, BiasParam(x)).unwrap();
        assert!((f.model.intercept - (2.75 + x)).abs() < 1e-12);
    }
    let f = fit_biased_mean(&line(7), BiasParam(0.0)).unwrap();
    assert!(f.objective.abs() < 1e-10);
}

#[test]
fn biased_mean_matches_primal_lp_and_centres_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let n = rng.random_range(5..80);
        let d = rng.random_range(0..4);
        let data = random_dataset(&mut rng, n, d);
        let x = BiasParam(rng.random_range(-0.5..0.5));
        let f = fit_biased_mean(&data, x).unwrap();
        let primal = solve_lp(&biased_mean_lp(&data, x)).unwrap();
        assert_eq!(primal.status, LpStatus::Optimal);
        assert!(rel(f.objective, primal.objective) < 1e-8, "{} vs {}", f.objective, primal.objective);
        let z = residuals(&f.model, &data);
        assert!((mean(&z) + x.x()).abs() < 1e-7);
    }
}

#[test]
fn se_examples() {
    let data = Dataset::response_only(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    let f = fit_se(&data).unwrap();
    assert!((f.model.intercept - 2.5).abs() < 1e-12);
    assert!((f.objective - 0.5).abs() < 1e-12);
    let zero = Dataset::new(DMatrix::zeros(4, 2), DVector::zeros(4)).unwrap();
    let f = fit_se(&zero).unwrap();
    assert_eq!(f.objective, 0.0);
    assert!(f.model.intercept.abs() < 1e-12 && f.model.coefficients.iter().all(|c| c.abs() < 1e-12));
}

#[test]
fn se_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let n = rng.random_range(5..120);
        let d = rng.random_range(0..5);
        let data = random_dataset(&mut rng, n, d);
        let f = fit_se(&data).unwrap();
        let primal = solve_lp(&se_lp(&data)).unwrap();
        assert_eq!(primal.status, LpStatus::Optimal);
        assert!(rel(f.objective, primal.objective) < 1e-8);
        let b = fit_biased_mean(&data, BiasParam(0.0)).unwrap();
        assert!((f.objective - b.objective).abs() <= 1e-9);
        let z = residuals(&f.model, &data);
        assert!(mean(&z).abs() < 1e-7);
        let half_l1 = 0.5 * mean(&z.iter().map(|v| v.abs()).collect::<Vec<_>>());
        assert!((f.objective - half_l1).abs() < 1e-9);

        let lambda = rng.random_range(0.1..10.0);
        let scaled = Dataset::new(data.design().clone(), data.response() * lambda).unwrap();
        let g = fit_se(&scaled).unwrap();
        assert!(rel(g.objective, lambda * f.objective) < 1e-8);
        let gz = residuals(&g.model, &scaled);
        assert!(rel(se_error(&gz, BiasParam(0.0)), lambda * se_error(&z, BiasParam(0.0))) < 1e-8);
    }
}

#[test]
fn quantile_and_biased_mean_regressions_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut checked = 0;
    for _ in 0..40 {
        let n = rng.random_range(20..300);
        let d = rng.random_range(1..6);
        let data = random_dataset(&mut rng, n, d);
        for x in [0.0, 0.005, 0.05, -0.02] {
            let b = fit_biased_mean(&data, BiasParam(x)).unwrap();
            let z = residuals(&b.model, &data);
            let (lo, hi) = induced_alpha_tol(&z, residual_zero_tol(&data));
            let alpha = b.dual_level.unwrap();
            assert!(alpha >= lo - 1e-9 && alpha <= hi + 1e-9, "{alpha} outside [{lo}, {hi}]");
            if !(alpha > 0.0 && alpha < 1.0) {
                continue;
            }
            let q = fit_quantile(&data, ConfidenceLevel::open(alpha).unwrap()).unwrap();
            let at_bmr = kb_error(&z, alpha);
            assert!(rel(at_bmr, q.objective) < 1e-6, "x={x} α={alpha}: {at_bmr} vs {}", q.objective);
            checked += 1;
        }
    }
    assert!(checked >= 150);
}

#[test]
fn induced_alpha_examples() {
    assert_eq!(induced_alpha(&[-1.0, -1.0, 1.0]), (2.0 / 3.0, 2.0 / 3.0));
    assert_eq!(induced_alpha(&[-2.0, -1.0, 0.0, 1.0]), (0.5, 0.75));
    assert_eq!(induced_alpha(&[1.0, 2.0]), (0.0, 0.0));
}

#[test]
fn newsvendor_examples() {
    let spec = NewsvendorSpec { gamma: 1.0, delta: 2.0 };
    assert_eq!(spec.alpha().unwrap(), 0.5);
    assert!(NewsvendorSpec { gamma: 1.0, delta: 1.0 }.alpha().is_err());
    let data = Dataset::response_only(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let (fit, alpha) = newsvendor_policy(&data, spec).unwrap();
    assert_eq!(alpha, 0.5);
    assert!((fit.model.intercept - 3.0).abs() < 1e-12);

    let (_, a, delta) = newsvendor_price(&data, BiasParam(0.0), 1.0).unwrap();
    assert!((a - 0.6).abs() < 1e-12);
    assert!((delta - 2.5).abs() < 1e-12);
    let (_, a_hi, delta_hi) = newsvendor_price(&data, BiasParam(1.5), 1.0).unwrap();
    assert!(a_hi >= a && delta_hi > delta);
    assert!(newsvendor_price(&data, BiasParam(10.0), 1.0).is_err());
    let priced = NewsvendorSpec { gamma: 1.0, delta: 1.0 / (1.0 - 0.803) };
    assert!((priced.delta - 5.0761).abs() < 1e-4);
    assert!((priced.alpha().unwrap() - 0.803).abs() < 1e-12);
}
