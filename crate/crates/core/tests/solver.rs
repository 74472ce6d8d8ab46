use nalgebra::DVector;
use proptest::prelude::*;

use netid::admm::{
    solve_observed, solve_with, stopping_test, update_zx, AdmmState, Phase, SolverConfig,
};
use netid::models::families::{build_tying_pde_with, PdeBoundary, PDE_TRUTH};
use netid::oracle::{dense_a, dense_kkt, dense_stopping, dense_t, dense_zx, nodewise_ols};
use netid::problem::Problem;
use netid::verify::{
    arx_instance, dual_invariant, pde_instance, random_instance, stationarity, Stationarity,
};
use netid::{Execution, NetidError};

fn tight_adaptive() -> SolverConfig {
    let mut cfg = SolverConfig { eps_rel: 1e-8, eps_abs: 1e-10, max_iter: 20_000, ..Default::default() };
    cfg.adaptive.enabled = true;
    cfg
}

#[test]
fn arx_estimate_is_nodewise_least_squares() {
    for seed in [1, 2, 3] {
        let problem = arx_instance(300, seed).unwrap();
        let res = solve_with(&problem, &tight_adaptive(), Execution::Sequential).unwrap();
        assert!(res.converged);
        let ols = nodewise_ols(&problem).concat();
        for (a, b) in res.theta.iter().zip(&ols) {
            assert!((a - b).abs() <= 1e-3, "seed {seed}: {a} vs {b}");
        }
        assert_eq!(res.theta0, res.theta);
    }
}

#[test]
fn every_primal_update_is_stationary() {
    let (pde, init) = pde_instance(5, 40, 1.0, 0.1, 21).unwrap();
    let cfg = SolverConfig { rho0: 50.0, max_iter: 25, theta0_init: Some(init), ..Default::default() };
    let s: Stationarity = stationarity(&pde, &cfg).unwrap();
    assert_eq!(s.iterations, 25);
    assert!(s.worst() <= 1e-8, "{s:?}");

    let arx = arx_instance(80, 22).unwrap();
    let mut cfg = SolverConfig { max_iter: 25, ..Default::default() };
    cfg.adaptive.enabled = true;
    assert!(stationarity(&arx, &cfg).unwrap().worst() <= 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn structured_zx_update_matches_dense_kkt(seed in 0u64..1_000_000) {
        let (problem, mut state) = random_instance(seed).unwrap();
        prop_assert!(problem.form.hidden_count() >= 1);
        prop_assert!(problem.form.z_len() <= 200);
        let (z, x) = dense_zx(&problem, &state).unwrap();
        let sv = dense_kkt(&problem, &state).0.singular_values();
        let scale = z.iter().chain(&x).fold(1.0f64, |m, v| m.max(v.abs()));
        // Both solves are backward stable, so they agree to the conditioning floor.
        let bound = 1e-9f64.max(16.0 * f64::EPSILON * sv.max() / sv.min() * scale);
        update_zx(&mut state, &problem, Execution::Sequential).unwrap();
        for (a, b) in state.z.iter().zip(&z).chain(state.x.iter().zip(&x)) {
            prop_assert!((a - b).abs() <= bound, "{} vs {} (bound {:e})", a, b, bound);
        }
    }
}

#[test]
fn dual_sum_vanishes_for_both_tying_maps() {
    let (pde, init) = pde_instance(5, 50, 1.0, 0.1, 23).unwrap();
    for boundary in [PdeBoundary::Mirrored, PdeBoundary::Literal] {
        let tying = build_tying_pde_with(5, boundary).unwrap();
        let p = Problem::from_form(pde.topology.clone(), pde.form.clone(), pde.models.clone(), tying).unwrap();
        let cfg = SolverConfig { rho0: 500.0, max_iter: 30, theta0_init: Some(init.clone()), ..Default::default() };
        assert!(dual_invariant(&p, &cfg).unwrap() <= 1e-10, "{boundary:?}");
    }
}

#[test]
fn stopping_test_matches_dense_formulas() {
    let (problem, init) = pde_instance(5, 30, 1.0, 0.1, 24).unwrap();
    let cfg = SolverConfig { rho0: 100.0, eps_rel: 1e-3, eps_abs: 1e-5, max_iter: 8, theta0_init: Some(init), ..Default::default() };
    let mut worst: f64 = 0.0;
    let mut obs = |phase: Phase, st: &AdmmState| {
        if phase == Phase::DualsUpdated {
            let a = stopping_test(st, &problem, &cfg);
            let b = dense_stopping(&problem, st, cfg.eps_abs, cfg.eps_rel);
            for (u, v) in [(a.r_p, b.r_p), (a.r_d, b.r_d), (a.eps_p, b.eps_p), (a.eps_d, b.eps_d)] {
                worst = worst.max((u - v).abs() / (1.0 + v.abs()));
            }
        }
    };
    solve_observed(&problem, &cfg, Execution::Sequential, &mut obs).unwrap();
    assert!(worst <= 1e-10, "{worst}");
}

#[test]
fn noiseless_truth_is_a_fixed_point() {
    let (problem, init) = pde_instance(5, 200, 0.0, 0.0, 25).unwrap();
    let cfg = SolverConfig { rho0: 1000.0, theta0_init: Some(init), ..Default::default() };
    let res = solve_with(&problem, &cfg, Execution::Sequential).unwrap();
    assert!(res.converged && res.iterations <= 5, "{} iterations", res.iterations);
    for (a, b) in res.theta0.iter().zip(&PDE_TRUTH) {
        assert!((a - b).abs() <= 1e-6);
    }
}

/// `min_x ‖T(θ)(A x + b)‖²` by a dense least-squares solve.
fn profile_objective(p: &Problem, theta0: &[f64]) -> f64 {
    let t = dense_t(p, &p.tying.expand(theta0));
    let ta = &t * dense_a(p);
    let tb = &t * DVector::from_column_slice(p.form.b());
    let x = ta.clone().svd(true, true).solve(&(-&tb), 1e-12).unwrap();
    (ta * x + tb).norm_squared()
}

#[test]
fn estimate_minimizes_the_profile_objective() {
    let (problem, init) = pde_instance(5, 40, 1.0, 0.0, 26).unwrap();
    let cfg = SolverConfig { rho0: 1000.0, eps_rel: 1e-6, eps_abs: 1e-9, max_iter: 5000, theta0_init: Some(init.clone()), ..Default::default() };
    let res = solve_with(&problem, &cfg, Execution::Sequential).unwrap();
    assert!(res.converged);

    // Compass search on the profile objective from the truth.
    let mut x = init;
    let mut fx = profile_objective(&problem, &x);
    let mut step = 0.05;
    while step > 1e-7 {
        let mut moved = false;
        for k in 0..x.len() {
            for s in [-step, step] {
                let mut y = x.clone();
                y[k] += s;
                let fy = profile_objective(&problem, &y);
                if fy < fx {
                    (x, fx) = (y, fy);
                    moved = true;
                }
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    for (a, b) in res.theta0.iter().zip(&x) {
        assert!((a - b).abs() <= 1e-4, "{:?} vs {:?}", res.theta0, x);
    }
    assert!(profile_objective(&problem, &res.theta0) <= fx * (1.0 + 1e-8));
}

#[test]
fn parallel_and_sequential_runs_are_identical() {
    let (problem, init) = pde_instance(7, 40, 1.0, 0.1, 27).unwrap();
    let cfg = SolverConfig { rho0: 1000.0, eps_rel: 1e-1, eps_abs: 1e-4, theta0_init: Some(init), ..Default::default() };
    let a = solve_with(&problem, &cfg, Execution::Sequential).unwrap();
    let b = solve_with(&problem, &cfg, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn iteration_cap_is_reported() {
    let problem = arx_instance(50, 28).unwrap();
    let cfg = SolverConfig { max_iter: 3, eps_abs: 0.0, eps_rel: 0.0, ..Default::default() };
    let res = solve_with(&problem, &cfg, Execution::Sequential).unwrap();
    assert_eq!((res.iterations, res.converged, res.history.len()), (3, false, 3));
    assert!(matches!(res.into_converged(), Err(NetidError::MaxIterExceeded(3))));
}

#[test]
fn wrong_initial_length_is_rejected() {
    let problem = arx_instance(20, 29).unwrap();
    let cfg = SolverConfig { theta0_init: Some(vec![0.0; 3]), ..Default::default() };
    assert!(matches!(solve_with(&problem, &cfg, Execution::Sequential), Err(NetidError::DimensionMismatch(_))));
}
