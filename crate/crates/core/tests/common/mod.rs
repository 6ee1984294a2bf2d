//! Independent dense oracles and random instances for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridgesub_core::Dataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0))
}

pub fn random_dataset(seed: u64, n: usize, p: usize) -> Dataset {
    let mut r = rng(seed);
    let x = uniform_matrix(&mut r, n, p);
    let beta = DVector::from_fn(p, |_, _| r.random_range(-1.0..1.0));
    let y = &x * beta + DVector::from_fn(n, |_, _| r.random_range(-0.5..0.5));
    Dataset::new(x, y).unwrap()
}

/// Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap();
        m.swap_rows(col, pivot);
        inv.swap_rows(col, pivot);
        let d = m[(col, col)];
        assert!(d.abs() > 1e-300, "singular matrix in oracle");
        for j in 0..n {
            m[(col, j)] /= d;
            inv[(col, j)] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = m[(i, col)];
                if f != 0.0 {
                    for j in 0..n {
                        m[(i, j)] -= f * m[(col, j)];
                        inv[(i, j)] -= f * inv[(col, j)];
                    }
                }
            }
        }
    }
    inv
}

/// Triple-loop `(X'X + lambda I)`.
pub fn naive_penalized_gram(x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut g = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            let mut s = 0.0;
            for i in 0..n {
                s += x[(i, a)] * x[(i, b)];
            }
            g[(a, b)] = s + if a == b { lambda } else { 0.0 };
        }
    }
    g
}

pub fn oracle_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    gauss_jordan_inverse(&naive_penalized_gram(x, lambda)) * x.transpose() * y
}

/// Diagonal of the dense n×n hat matrix.
pub fn oracle_hat_diagonal(x: &DMatrix<f64>, lambda: f64) -> Vec<f64> {
    let m = gauss_jordan_inverse(&naive_penalized_gram(x, lambda));
    let h = x * m * x.transpose();
    (0..x.nrows()).map(|i| h[(i, i)]).collect()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Random strictly positive probability vector.
pub fn random_probabilities(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// `n x p` matrix with orthonormal columns.
pub fn orthonormal_columns(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    let a = uniform_matrix(rng, n, p);
    a.qr().q().columns(0, p).into_owned()
}
