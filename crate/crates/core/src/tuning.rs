//! Ridge-parameter selection over a fixed grid: K-fold cross-validation, the
//! leave-one-out shortcut and generalized cross-validation.
//!
//! Every criterion is evaluated from cached cross products, so one λ costs a
//! p x p factorization plus a pass over the rows. Grid points are scored in
//! parallel and collected in grid order. A grid point whose denominator
//! degenerates (`h_ii -> 1` or `tr(H)/n -> 1`) scores `+inf`; tuning fails only
//! when no grid point is usable.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ridge::RidgeSystem;
use crate::rng::rng_from_seed;
use crate::sampling::Subsample;

const DENOMINATOR_EPS: f64 = 1e-12;

/// Strictly increasing positive ridge parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub const DEFAULT_MIN: f64 = 1e-4;
    pub const DEFAULT_MAX: f64 = 1e4;
    pub const DEFAULT_SIZE: usize = 61;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("lambda grid is empty".into()));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "lambda grid values must be positive and finite".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "lambda grid must be strictly increasing".into(),
            ));
        }
        Ok(LambdaGrid { values })
    }

    /// `size` values evenly spaced in log10 between `min` and `max` inclusive.
    pub fn log_spaced(min: f64, max: f64, size: usize) -> Result<Self> {
        if size == 0 || !(min > 0.0) || !(max >= min) {
            return Err(Error::InvalidArgument(format!(
                "bad log grid: min {min}, max {max}, size {size}"
            )));
        }
        if size == 1 {
            return Self::new(vec![min]);
        }
        let (lo, hi) = (min.log10(), max.log10());
        let step = (hi - lo) / (size - 1) as f64;
        Self::new((0..size).map(|i| 10f64.powf(lo + step * i as f64)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid index closest to `lambda` on a log scale.
    pub fn nearest_index(&self, lambda: f64) -> usize {
        let target = lambda.ln();
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if (v.ln() - target).abs() < (self.values[best].ln() - target).abs() {
                best = i;
            }
        }
        best
    }

    /// Index of an exact grid value.
    pub fn position(&self, lambda: f64) -> Option<usize> {
        self.values.iter().position(|&v| v == lambda)
    }
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self::log_spaced(Self::DEFAULT_MIN, Self::DEFAULT_MAX, Self::DEFAULT_SIZE)
            .expect("default grid is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TuningMethod {
    KFold { k: usize },
    Loocv,
    Gcv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub lambda_star: f64,
    pub criterion_curve: Vec<(f64, f64)>,
    pub method: TuningMethod,
}

impl TuningResult {
    /// Argmin of the curve; exact ties go to the larger λ.
    fn from_curve(curve: Vec<(f64, f64)>, method: TuningMethod) -> Result<Self> {
        let mut best: Option<(f64, f64)> = None;
        for &(lambda, score) in &curve {
            if !score.is_finite() {
                continue;
            }
            match best {
                Some((_, s)) if score > s => {}
                _ => best = Some((lambda, score)),
            }
        }
        let (lambda_star, _) = best.ok_or_else(|| {
            Error::Degenerate("criterion is degenerate at every grid point".into())
        })?;
        Ok(TuningResult {
            lambda_star,
            criterion_curve: curve,
            method,
        })
    }

    pub fn scores(&self) -> Vec<f64> {
        self.criterion_curve.iter().map(|&(_, s)| s).collect()
    }

    /// Export as `lambda,score` CSV.
    pub fn write_curve_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut body = String::from("lambda,score\n");
        for (l, s) in &self.criterion_curve {
            body.push_str(&format!("{l},{s}\n"));
        }
        let path = path.as_ref();
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

fn score_grid<F>(grid: &LambdaGrid, score: F) -> Result<Vec<(f64, f64)>>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    grid.values()
        .par_iter()
        .map(|&lambda| score(lambda).map(|s| (lambda, s)))
        .collect()
}

/// `K^-1 sum_k ||y_k - X_k beta_{-k}(lambda)||^2` over a seeded random partition.
pub fn kfold_cv(d: &Dataset, grid: &LambdaGrid, k: usize, seed: u64) -> Result<TuningResult> {
    let folds = fold_partition(d.n(), k, seed)?;
    let full = RidgeSystem::new(d);
    let fold_data: Vec<(Dataset, RidgeSystem)> = folds
        .iter()
        .map(|rows| {
            let sub = d.select_rows(rows)?;
            let sys = RidgeSystem::new(&sub);
            Ok((sub, sys))
        })
        .collect::<Result<_>>()?;

    let curve = score_grid(grid, |lambda| {
        let mut total = 0.0;
        for (held_out, sys) in &fold_data {
            let train = RidgeSystem {
                gram: &full.gram - &sys.gram,
                xty: &full.xty - &sys.xty,
            };
            let (beta, _) = train.solve(lambda)?;
            total += (held_out.y() - held_out.x() * &beta).norm_squared();
        }
        Ok(total / k as f64)
    })?;
    TuningResult::from_curve(curve, TuningMethod::KFold { k })
}

/// Seeded permutation cut into `k` contiguous folds of near-equal size.
pub fn fold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::Degenerate(format!("{k} folds over {n} rows leaves an empty fold")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    Ok((0..k)
        .map(|f| perm[f * n / k..(f + 1) * n / k].to_vec())
        .collect())
}

/// Leave-one-out CV through `e_i / (1 - h_ii)`, one full fit per λ.
pub fn loocv_shortcut(d: &Dataset, grid: &LambdaGrid) -> Result<TuningResult> {
    let system = RidgeSystem::new(d);
    let xt = d.x().transpose();
    let n = d.n() as f64;
    let curve = score_grid(grid, |lambda| {
        let (beta, f) = system.solve(lambda)?;
        let e = d.y() - d.x() * &beta;
        let z: DMatrix<f64> = f
            .lower()
            .solve_lower_triangular(&xt)
            .expect("Cholesky factor has a positive diagonal");
        let mut total = 0.0;
        for (i, col) in z.column_iter().enumerate() {
            let denom = 1.0 - col.norm_squared();
            if denom <= DENOMINATOR_EPS {
                return Ok(f64::INFINITY);
            }
            total += (e[i] / denom).powi(2);
        }
        Ok(total / n)
    })?;
    TuningResult::from_curve(curve, TuningMethod::Loocv)
}

/// Generalized cross-validation: leave-one-out with every `h_ii` replaced by `tr(H)/n`.
pub fn gcv(d: &Dataset, grid: &LambdaGrid) -> Result<TuningResult> {
    let system = RidgeSystem::new(d);
    let n = d.n() as f64;
    let curve = score_grid(grid, |lambda| gcv_score(d, &system, lambda, n))?;
    TuningResult::from_curve(curve, TuningMethod::Gcv)
}

fn gcv_score(d: &Dataset, system: &RidgeSystem, lambda: f64, n: f64) -> Result<f64> {
    let (beta, f) = system.solve(lambda)?;
    let rss = residual_ss(d, &beta);
    let denom = 1.0 - system.trace_hat(&f) / n;
    if denom <= DENOMINATOR_EPS {
        return Ok(f64::INFINITY);
    }
    Ok(rss / n / (denom * denom))
}

fn residual_ss(d: &Dataset, beta: &DVector<f64>) -> f64 {
    (d.y() - d.x() * beta).norm_squared()
}

/// Run `method` on a dataset. `seed` only matters for K-fold.
pub fn tune(d: &Dataset, grid: &LambdaGrid, method: TuningMethod, seed: u64) -> Result<TuningResult> {
    match method {
        TuningMethod::KFold { k } => kfold_cv(d, grid, k, seed),
        TuningMethod::Loocv => loocv_shortcut(d, grid),
        TuningMethod::Gcv => gcv(d, grid),
    }
}

/// Select λ̃ on the weighted subsample `(Phi* X*, Phi* y*)`.
///
/// Folds are drawn over the r weighted rows without regard to their weights.
pub fn tune_subsample(
    d: &Dataset,
    sub: &Subsample,
    grid: &LambdaGrid,
    method: TuningMethod,
    seed: u64,
) -> Result<TuningResult> {
    if let TuningMethod::KFold { k } = method {
        if sub.r < k {
            return Err(Error::Degenerate(format!(
                "subsample of {} rows cannot form {k} folds",
                sub.r
            )));
        }
    }
    let rows = sub.weighted_rows(d)?;
    tune(&rows, grid, method, seed)
}
