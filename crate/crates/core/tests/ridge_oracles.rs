mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use ridgesub_core::leverage::{average_leverage, exact_ridge_leverage, leverage_scores, row_norms};
use ridgesub_core::ridge::{
    multiplicity_ridge_solve, normal_equation_residual, residuals, ridge_solve,
    weighted_ridge_solve, WeightDiag,
};
use ridgesub_core::sampling::{draw, plan_opt_linear};
use ridgesub_core::{Dataset, SamplingPlan, Strategy};

fn plan_from(pi: Vec<f64>) -> SamplingPlan {
    SamplingPlan {
        pi: Some(pi),
        strategy: Strategy::Runif,
        lambda_used: None,
    }
}

/// Row form: stack `phi_k x*_k`, `phi_k y*_k` and solve by the dense oracle.
fn oracle_row_form(d: &Dataset, rows: &[usize], pi: &[f64], lambda: f64) -> DVector<f64> {
    let r = rows.len();
    let xs = DMatrix::from_fn(r, d.p(), |k, j| d.x()[(rows[k], j)] / (r as f64 * pi[rows[k]]).sqrt());
    let ys = DVector::from_fn(r, |k, _| d.y()[rows[k]] / (r as f64 * pi[rows[k]]).sqrt());
    common::oracle_ridge(&xs, &ys, lambda)
}

#[test]
fn ridge_matches_gauss_jordan_oracle() {
    let d = common::random_dataset(1, 20, 4);
    let fit = ridge_solve(&d, 0.5).unwrap();
    let oracle = common::oracle_ridge(d.x(), d.y(), 0.5);
    assert!(common::rel_err(&fit.beta, &oracle) < 1e-10);
    let m = common::gauss_jordan_inverse(&common::naive_penalized_gram(d.x(), 0.5));
    let trace = (d.x() * m * d.x().transpose()).trace();
    assert!((fit.trace_h - trace).abs() < 1e-10 * trace);
}

#[test]
fn zero_lambda_is_least_squares() {
    let d = common::random_dataset(2, 10, 3);
    let fit = ridge_solve(&d, 0.0).unwrap();
    let ols = d.x().clone().svd(true, true).solve(d.y(), 1e-14).unwrap();
    assert!(common::rel_err(&fit.beta, &ols) < 1e-10);
}

#[test]
fn residuals_satisfy_normal_equation() {
    let d = common::random_dataset(3, 40, 5);
    let fit = ridge_solve(&d, 2.0).unwrap();
    let e = residuals(&d, &fit.beta).unwrap();
    assert_eq!(e, fit.residuals);
    let lhs = d.x().tr_mul(&e);
    assert!((lhs - &fit.beta * 2.0).norm() < 1e-8);
}

#[test]
fn row_and_full_data_forms_agree_on_fixed_instance() {
    let d = common::random_dataset(4, 30, 3);
    let mut rng = common::rng(40);
    let pi = common::random_probabilities(&mut rng, 30);
    let sub = draw(&plan_from(pi.clone()), 12, 99).unwrap();
    let row_form = weighted_ridge_solve(&d, &sub.indices, &sub.weights, 0.7).unwrap();
    let w_form = multiplicity_ridge_solve(&d, &sub.multiplicity_weights(), 0.7).unwrap();
    let oracle = oracle_row_form(&d, &sub.indices, &pi, 0.7);
    assert!(common::rel_err(&row_form.beta, &w_form) < 1e-10);
    assert!(common::rel_err(&row_form.beta, &oracle) < 1e-10);
    // W_i = K_i / (r pi_i)
    let w = sub.multiplicity_weights();
    for i in 0..30 {
        let expected = sub.counts[i] as f64 / (12.0 * pi[i]);
        assert!((w[i] - expected).abs() < 1e-12 * expected.max(1.0));
    }
}

#[test]
fn norm_of_solution_shrinks_with_lambda() {
    for seed in 0..10 {
        let d = common::random_dataset(100 + seed, 25, 4);
        let mut last = f64::INFINITY;
        for k in -8..=8 {
            let norm = ridge_solve(&d, 10f64.powi(k)).unwrap().beta.norm();
            assert!(norm <= last * (1.0 + 1e-12));
            last = norm;
        }
    }
}

#[test]
fn leverage_matches_dense_hat_matrix() {
    let d = common::random_dataset(5, 15, 3);
    let prof = exact_ridge_leverage(&d, 0.3).unwrap();
    let oracle = common::oracle_hat_diagonal(d.x(), 0.3);
    for (h, o) in prof.h.iter().zip(&oracle) {
        assert!((h - o).abs() < 1e-10);
    }
    let mean = oracle.iter().sum::<f64>() / 15.0;
    assert!((average_leverage(&prof) - mean).abs() < 1e-10);
}

#[test]
fn leverage_trace_matches_singular_values() {
    for seed in 0..5 {
        let d = common::random_dataset(50 + seed, 12, 4);
        for &lambda in &[0.01, 1.0, 50.0] {
            let prof = exact_ridge_leverage(&d, lambda).unwrap();
            let sv = d.x().clone().singular_values();
            let expected: f64 = sv.iter().map(|s| s * s / (s * s + lambda)).sum();
            assert!((prof.trace - expected).abs() < 1e-8 * expected);
            assert!((prof.h.iter().sum::<f64>() - prof.trace).abs() < 1e-8 * prof.trace);
            assert!(prof.trace < 4.0);
        }
    }
}

#[test]
fn leverage_non_increasing_in_lambda() {
    let d = common::random_dataset(6, 20, 3);
    let mut prev: Option<Vec<f64>> = None;
    for k in -4..=6 {
        let h = exact_ridge_leverage(&d, 10f64.powi(k)).unwrap().h;
        if let Some(p) = &prev {
            for (a, b) in h.iter().zip(p) {
                assert!(*a <= b + 1e-14);
            }
        }
        prev = Some(h);
    }
}

#[test]
fn row_norms_match_scalar_loop() {
    let mut rng = common::rng(7);
    let x = common::uniform_matrix(&mut rng, 100, 10);
    let d = Dataset::new(x.clone(), DVector::zeros(100)).unwrap();
    let norms = row_norms(&d).unwrap();
    for i in 0..100 {
        let mut s = 0.0;
        for j in 0..10 {
            s += x[(i, j)] * x[(i, j)];
        }
        assert!((norms[i] - s.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn opt_plan_matches_unpenalized_hat_matrix() {
    let d = common::random_dataset(8, 12, 3);
    let plan = plan_opt_linear(&d).unwrap();
    let h = common::oracle_hat_diagonal(d.x(), 0.0);
    assert!((h.iter().sum::<f64>() - 3.0).abs() < 1e-10);
    let pi = plan.probabilities().unwrap();
    for (p, hi) in pi.iter().zip(&h) {
        assert!((p - hi / 3.0).abs() < 1e-10);
    }
    let prof = leverage_scores(&d, 0.0).unwrap();
    assert!((prof.trace - 3.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normal_equation_holds(seed in any::<u64>(), n in 2usize..40, p in 1usize..6, lexp in -3i32..4) {
        let d = common::random_dataset(seed, n, p);
        let lambda = 10f64.powi(lexp);
        let fit = ridge_solve(&d, lambda).unwrap();
        prop_assert!(normal_equation_residual(&d, &fit.beta, lambda) <= 1e-8);
        prop_assert_eq!(fit.residuals.len(), n);
    }

    #[test]
    fn weighted_forms_agree(seed in any::<u64>(), n in 2usize..=50, p in 1usize..=5, r in 1usize..60) {
        let d = common::random_dataset(seed, n, p);
        let mut rng = common::rng(seed ^ 0x55);
        let pi = common::random_probabilities(&mut rng, n);
        let lambda = rng.random_range(0.05..5.0);
        let sub = draw(&plan_from(pi), r, seed).unwrap();
        prop_assert_eq!(sub.counts.iter().map(|&c| c as usize).sum::<usize>(), r);
        let row = weighted_ridge_solve(&d, &sub.indices, &sub.weights, lambda).unwrap();
        let full = multiplicity_ridge_solve(&d, &sub.multiplicity_weights(), lambda).unwrap();
        prop_assert!(common::rel_err(&row.beta, &full) < 1e-10);
    }

    #[test]
    fn unit_weights_reduce_to_full_fit(seed in any::<u64>(), n in 2usize..30, p in 1usize..5) {
        let d = common::random_dataset(seed, n, p);
        let rows: Vec<usize> = (0..n).collect();
        let a = weighted_ridge_solve(&d, &rows, &WeightDiag::unit(n), 0.4).unwrap();
        let b = ridge_solve(&d, 0.4).unwrap();
        prop_assert!(common::rel_err(&a.beta, &b.beta) < 1e-12);
    }

    #[test]
    fn leverage_in_unit_interval(seed in any::<u64>(), n in 2usize..40, p in 1usize..6, lexp in -4i32..4) {
        let d = common::random_dataset(seed, n, p);
        let prof = exact_ridge_leverage(&d, 10f64.powi(lexp)).unwrap();
        prop_assert!(prof.h.iter().all(|&h| (0.0..1.0).contains(&h)));
        prop_assert!(prof.trace < n.min(p) as f64);
    }
}
