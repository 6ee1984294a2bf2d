//! Ridge leverage scores `h_ii = x_i' (X'X + lambda I)^-1 x_i` and row norms.
//!
//! Exact scores cost one p x p Cholesky factorization plus a triangular solve
//! per row: with `L L' = X'X + lambda I`, `h_ii = ||L^-1 x_i||^2`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ridge::RidgeSystem;

const ROW_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageProfile {
    pub h: Vec<f64>,
    pub lambda: f64,
    pub trace: f64,
    pub row_norms: Vec<f64>,
}

impl LeverageProfile {
    pub fn n(&self) -> usize {
        self.h.len()
    }

    /// `max h_ii / mean h_ii`; 1 means perfectly homogeneous scores.
    pub fn heterogeneity(&self) -> f64 {
        let mean = average_leverage(self);
        let max = self.h.iter().cloned().fold(0.0, f64::max);
        if mean > 0.0 {
            max / mean
        } else {
            f64::NAN
        }
    }
}

/// Exact ridge leverage scores. `lambda` must be positive.
pub fn exact_ridge_leverage(d: &Dataset, lambda: f64) -> Result<LeverageProfile> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ridge leverage needs lambda > 0, got {lambda}"
        )));
    }
    leverage_scores(d, lambda)
}

/// Leverage scores at any lambda >= 0; lambda = 0 gives the ordinary
/// projection leverage and is subject to the solver's condition check.
pub fn leverage_scores(d: &Dataset, lambda: f64) -> Result<LeverageProfile> {
    let f = RidgeSystem::new(d).factorize(lambda)?;
    let l = f.lower();
    let xt = d.x().transpose();
    let n = d.n();

    let chunks: Vec<Vec<f64>> = (0..n)
        .step_by(ROW_CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + ROW_CHUNK).min(n);
            let block = xt.columns(start, end - start).into_owned();
            let z = l
                .solve_lower_triangular(&block)
                .expect("Cholesky factor has a positive diagonal");
            z.column_iter().map(|c| c.norm_squared()).collect()
        })
        .collect();
    let h: Vec<f64> = chunks.into_iter().flatten().collect();
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("leverage scores"));
    }
    let trace = h.iter().sum();
    Ok(LeverageProfile {
        h,
        lambda,
        trace,
        row_norms: row_norms(d)?,
    })
}

/// `n^-1 tr(H)`.
pub fn average_leverage(profile: &LeverageProfile) -> f64 {
    profile.trace / profile.n() as f64
}

/// Euclidean norm of every row, one pass over the data.
pub fn row_norms(d: &Dataset) -> Result<Vec<f64>> {
    let norms = row_norms_of(d.x());
    if norms.iter().all(|v| v.is_finite()) {
        Ok(norms)
    } else {
        Err(Error::NonFinite("row norms"))
    }
}

pub(crate) fn row_norms_of(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows();
    let mut sq = vec![0.0; n];
    // Column-major storage: accumulate column by column, then take roots.
    for col in x.column_iter() {
        for (acc, v) in sq.iter_mut().zip(col.iter()) {
            *acc += v * v;
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}
