mod common;

use common::{normal_equations, rng};
use ledgercast::lags::lag_weighted_fit;
use ledgercast::linalg::{matrix_from_rows, ols_fit, penalized_lstsq, Vector};
use proptest::prelude::*;
use rand::Rng;

fn random_system(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
    let y: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
    (x, y)
}

#[test]
fn least_squares_matches_normal_equations() {
    for seed in 0..20 {
        let (x, y) = random_system(seed, 30, 5);
        let beta = ols_fit(&matrix_from_rows(&x).unwrap(), &Vector::from_vec(y.clone()), 0.0).unwrap();
        let reference = normal_equations(&x, &y, &[0.0; 5]);
        for (a, b) in beta.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn two_column_ridge_closed_form() {
    // Orthogonal columns: β_j = x_jᵀy / (x_jᵀx_j + λ).
    let x = vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
    let y = vec![3.0, 1.0, -1.0, 2.0];
    let lambda = 2.5;
    let beta = ols_fit(&matrix_from_rows(&x).unwrap(), &Vector::from_vec(y.clone()), lambda).unwrap();
    assert!((beta[0] - (3.0 + 1.0 + 1.0 - 2.0) / (4.0 + lambda)).abs() < 1e-12);
    assert!((beta[1] - (3.0 - 1.0 - 1.0 - 2.0) / (4.0 + lambda)).abs() < 1e-12);
}

#[test]
fn lag_penalty_grows_with_lag() {
    let (x, y) = random_system(5, 40, 3);
    let lags = [1, 4, 9];
    let (lambda, gamma) = (3.0, 0.5);
    let beta = lag_weighted_fit(&matrix_from_rows(&x).unwrap(), &lags, &Vector::from_vec(y.clone()), lambda, gamma).unwrap();
    let penalties: Vec<f64> = lags.iter().map(|&l| lambda * (1.0 + gamma * l as f64)).collect();
    let reference = normal_equations(&x, &y, &penalties);
    for (a, b) in beta.iter().zip(&reference) {
        assert!((a - b).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn penalized_matches_normal_equations(seed in 0u64..100_000, p in 1usize..6, pens in prop::collection::vec(0.0f64..20.0, 6)) {
        let (x, y) = random_system(seed, 25, p);
        let pens = &pens[..p];
        let beta = penalized_lstsq(&matrix_from_rows(&x).unwrap(), &Vector::from_vec(y.clone()), pens, None).unwrap();
        let reference = normal_equations(&x, &y, pens);
        for (a, b) in beta.iter().zip(&reference) {
            prop_assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn gamma_zero_is_plain_ridge(seed in 0u64..100_000, lambda in 0.0f64..10.0) {
        let (x, y) = random_system(seed, 20, 3);
        let m = matrix_from_rows(&x).unwrap();
        let yv = Vector::from_vec(y);
        let a = lag_weighted_fit(&m, &[0, 5, 12], &yv, lambda, 0.0).unwrap();
        let b = ols_fit(&m, &yv, lambda).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            prop_assert!((u - v).abs() < 1e-12 * (1.0 + v.abs()));
        }
    }
}
