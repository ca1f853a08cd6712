use quadlab_lp::{
    solve_lp, solve_mip, solve_mip_with, LpError, LpProblem, LpStatus, MipConfig, MipStatus,
    Relation,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn single_binary_goes_to_one() {
    let mut p = LpProblem::new();
    let z = p.add_binary(-1.0);
    let s = solve_mip(&p, 10.0, 0.0).unwrap();
    assert_eq!(s.status, MipStatus::Optimal);
    assert_eq!(s.x[z], 1.0);
    assert_eq!(s.objective, -1.0);
}

#[test]
fn two_item_knapsack() {
    let mut p = LpProblem::new();
    let a = p.add_binary(-1.0);
    let b = p.add_binary(-1.0);
    p.add_row([(a, 1.0), (b, 1.0)], Relation::Le, 1.0);
    let s = solve_mip(&p, 10.0, 0.0).unwrap();
    assert_eq!(s.status, MipStatus::Optimal);
    assert_eq!(s.objective, -1.0);
    assert_eq!(s.x[a] + s.x[b], 1.0);
}

#[test]
fn zero_gap_on_three_binaries() {
    let mut p = LpProblem::new();
    let z: Vec<usize> = [-3.0, -2.0, -2.5].iter().map(|&c| p.add_binary(c)).collect();
    p.add_row([(z[0], 2.0), (z[1], 1.5), (z[2], 1.7)], Relation::Le, 3.3);
    let s = solve_mip(&p, 10.0, 0.0).unwrap();
    assert_eq!(s.status, MipStatus::Optimal);
    assert_eq!(s.gap, 0.0);
    assert!((s.objective + 4.5).abs() < 1e-12);
}

#[test]
fn infeasible_root() {
    let mut p = LpProblem::new();
    let a = p.add_binary(1.0);
    let b = p.add_binary(1.0);
    p.add_row([(a, 1.0), (b, 1.0)], Relation::Ge, 3.0);
    let s = solve_mip(&p, 10.0, 0.0).unwrap();
    assert_eq!(s.status, MipStatus::Infeasible);
    assert!(!s.has_incumbent());
}

#[test]
fn integrality_gap_infeasible() {
    // 2a + 2b = 1 has LP solutions but no binary one.
    let mut p = LpProblem::new();
    let a = p.add_binary(0.0);
    let b = p.add_binary(0.0);
    p.add_row([(a, 2.0), (b, 2.0)], Relation::Eq, 1.0);
    assert_eq!(solve_mip(&p, 10.0, 0.0).unwrap().status, MipStatus::Infeasible);
}

#[test]
fn rejects_pure_lp() {
    let mut p = LpProblem::new();
    p.add_var(1.0, 0.0, 1.0);
    assert_eq!(solve_mip(&p, 1.0, 0.0), Err(LpError::NoIntegerVariables));
}

/// Mixed instance: `nb` binaries plus a few bounded continuous variables.
fn random_mixed(rng: &mut ChaCha8Rng, nb: usize) -> LpProblem {
    let mut p = LpProblem::new();
    let z: Vec<usize> = (0..nb).map(|_| p.add_binary(rng.random_range(-5.0..2.0))).collect();
    let nc = rng.random_range(0..4);
    let w: Vec<usize> = (0..nc)
        .map(|_| p.add_var(rng.random_range(-1.0..1.0), -2.0, 3.0))
        .collect();
    for _ in 0..rng.random_range(1..6) {
        let mut coeffs = Vec::new();
        for &j in &z {
            if rng.random_bool(0.6) {
                coeffs.push((j, rng.random_range(0.0..3.0)));
            }
        }
        coeffs.extend(w.iter().map(|&j| (j, rng.random_range(-1.0..1.0))));
        let cap = rng.random_range(0.5..(nb as f64 + 0.5));
        p.add_row(coeffs, Relation::Le, cap);
    }
    p
}

/// Exhaustive oracle: enumerate binaries, solve the continuous remainder.
fn brute_force(p: &LpProblem) -> f64 {
    let bins = p.binaries();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << bins.len()) {
        let mut q = p.relaxation();
        for (k, &j) in bins.iter().enumerate() {
            let v = f64::from((mask >> k) & 1);
            q.set_bounds(j, v, v);
        }
        let s = solve_lp(&q).unwrap();
        if s.status == LpStatus::Optimal {
            best = best.min(s.objective);
        }
    }
    best
}

#[test]
fn matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..40 {
        let nb = rng.random_range(1..=12);
        let p = random_mixed(&mut rng, nb);
        let s = solve_mip(&p, 60.0, 0.0).unwrap();
        let oracle = brute_force(&p);
        assert_eq!(s.status, MipStatus::Optimal, "trial {trial}");
        assert!(
            (s.objective - oracle).abs() <= 1e-8,
            "trial {trial}: mip {} oracle {oracle}",
            s.objective
        );
        assert!(s.bound <= s.objective + 1e-12);
        assert!(s.gap >= 0.0);
        for &j in &p.binaries() {
            assert!(s.x[j] == 0.0 || s.x[j] == 1.0);
        }
        assert!(p.max_row_violation(&s.x) <= 1e-6);
    }
}

#[test]
fn bound_history_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let p = random_mixed(&mut rng, 12);
        let s = solve_mip(&p, 60.0, 0.0).unwrap();
        for w in s.bound_history.windows(2) {
            assert!(w[1] >= w[0], "{:?}", s.bound_history);
        }
    }
}

#[test]
fn deterministic_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let p = random_mixed(&mut rng, 12);
    let a = solve_mip(&p, 60.0, 0.0).unwrap();
    let b = solve_mip(&p, 60.0, 0.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn node_limit_and_initial_assignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_mixed(&mut rng, 12);
    let full = solve_mip(&p, 60.0, 0.0).unwrap();
    let cfg = MipConfig {
        node_limit: Some(1),
        initial_assignment: Some(full.x.clone()),
        ..MipConfig::default()
    };
    let s = solve_mip_with(&p, &cfg).unwrap();
    assert!(matches!(s.status, MipStatus::Feasible | MipStatus::Optimal));
    assert!((s.objective - full.objective).abs() < 1e-9);
    assert!(s.bound <= s.objective + 1e-12);
}

#[test]
fn zero_time_limit_reports_time_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = random_mixed(&mut rng, 10);
    let s = solve_mip(&p, 0.0, 0.0).unwrap();
    assert_eq!(s.status, MipStatus::TimeLimit);
}
