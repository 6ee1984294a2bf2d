//! Closed-form ridge solvers.
//!
//! All solves go through a Cholesky factorization of the p x p system
//! `X'X + lambda I`; the n x n hat matrix is never formed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Condition-number ceiling for unpenalized (lambda = 0) solves.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub beta: DVector<f64>,
    pub lambda: f64,
    /// `y - X beta` on the rows the fit was computed from.
    pub residuals: DVector<f64>,
    /// `tr(H) = tr[(X'X + lambda I)^-1 X'X]`.
    pub trace_h: f64,
}

/// Cross products `X'X` and `X'y` of a dataset, reusable across many lambdas.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
}

/// A factorized `X'X + lambda I`.
#[derive(Debug, Clone)]
pub struct Factorized {
    pub lambda: f64,
    chol: Cholesky<f64, Dyn>,
}

impl Factorized {
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// `(X'X + lambda I)^-1`.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Lower Cholesky factor `L` with `L L' = X'X + lambda I`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

impl RidgeSystem {
    pub fn new(d: &Dataset) -> Self {
        RidgeSystem {
            gram: d.x().tr_mul(d.x()),
            xty: d.x().tr_mul(d.y()),
        }
    }

    pub fn p(&self) -> usize {
        self.gram.nrows()
    }

    /// Factorize `X'X + lambda I`; lambda = 0 is guarded by a condition check.
    pub fn factorize(&self, lambda: f64) -> Result<Factorized> {
        factorize_gram(&self.gram, lambda)
    }

    pub fn solve(&self, lambda: f64) -> Result<(DVector<f64>, Factorized)> {
        let f = self.factorize(lambda)?;
        let beta = f.solve(&self.xty);
        if !beta.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ridge coefficients"));
        }
        Ok((beta, f))
    }

    /// `tr[(X'X + lambda I)^-1 X'X]` from an existing factorization.
    pub fn trace_hat(&self, f: &Factorized) -> f64 {
        let m = f.inverse();
        m.component_mul(&self.gram).sum()
    }
}

pub(crate) fn factorize_gram(gram: &DMatrix<f64>, lambda: f64) -> Result<Factorized> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge parameter must be finite and nonnegative, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        let condition = condition_number(gram);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::Singular { condition });
        }
    }
    let mut a = gram.clone();
    for j in 0..a.nrows() {
        a[(j, j)] += lambda;
    }
    match Cholesky::new(a) {
        Some(chol) => Ok(Factorized { lambda, chol }),
        None => Err(Error::Singular {
            condition: condition_number(gram),
        }),
    }
}

/// Ratio of extreme eigenvalues of a symmetric PSD matrix (infinite if singular).
pub fn condition_number(sym: &DMatrix<f64>) -> f64 {
    let eig = sym.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Full-sample ridge estimate `(X'X + lambda I)^-1 X'y`.
pub fn ridge_solve(d: &Dataset, lambda: f64) -> Result<RidgeFit> {
    let system = RidgeSystem::new(d);
    let (beta, f) = system.solve(lambda)?;
    let trace_h = system.trace_hat(&f);
    let residuals = residuals(d, &beta)?;
    Ok(RidgeFit {
        beta,
        lambda,
        residuals,
        trace_h,
    })
}

/// `e = y - X beta`.
pub fn residuals(d: &Dataset, beta: &DVector<f64>) -> Result<DVector<f64>> {
    if beta.len() != d.p() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient vector of length {} for {} columns",
            beta.len(),
            d.p()
        )));
    }
    Ok(d.y() - d.x() * beta)
}

/// `||(X'X + lambda I) beta - X'y|| / ||X'y||` for the data a fit came from.
pub fn normal_equation_residual(d: &Dataset, beta: &DVector<f64>, lambda: f64) -> f64 {
    let system = RidgeSystem::new(d);
    let lhs = &system.gram * beta + beta * lambda;
    let denom = system.xty.norm();
    let diff = (lhs - &system.xty).norm();
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

/// The diagonal `Phi*` of a drawn subsample, one entry per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDiag {
    /// `1 / sqrt(r pi*_k)` for randomized draws, `1` for deterministic selections.
    pub weights: Vec<f64>,
    /// `pi*_k` of each draw, absent for deterministic selections.
    pub draw_probs: Option<Vec<f64>>,
}

impl WeightDiag {
    pub fn from_draw_probabilities(draw_probs: Vec<f64>) -> Result<Self> {
        let r = draw_probs.len() as f64;
        let mut weights = Vec::with_capacity(draw_probs.len());
        for (k, &pi) in draw_probs.iter().enumerate() {
            if !(pi > 0.0) {
                return Err(Error::ZeroProbability(k));
            }
            let w = 1.0 / (r * pi).sqrt();
            if !w.is_finite() {
                return Err(Error::NonFinite("subsample weights"));
            }
            weights.push(w);
        }
        Ok(WeightDiag {
            weights,
            draw_probs: Some(draw_probs),
        })
    }

    pub fn unit(r: usize) -> Self {
        WeightDiag {
            weights: vec![1.0; r],
            draw_probs: None,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Full-length diagonal of `W = Omega K`: `W_i = K_i / (r pi_i)`.
    pub fn multiplicity_weights(&self, rows: &[usize], n: usize) -> Vec<f64> {
        let mut w = vec![0.0; n];
        for (&i, &phi) in rows.iter().zip(&self.weights) {
            w[i] += phi * phi;
        }
        w
    }

    fn validate(&self, rows: &[usize]) -> Result<()> {
        if rows.is_empty() {
            return Err(Error::Degenerate("empty subsample".into()));
        }
        if rows.len() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} weights",
                rows.len(),
                self.weights.len()
            )));
        }
        if !self.weights.iter().all(|w| w.is_finite() && *w > 0.0) {
            return Err(Error::NonFinite("subsample weights"));
        }
        Ok(())
    }
}

/// The weighted rows `(Phi* X*, Phi* y*)` of a subsample.
pub fn weighted_rows(d: &Dataset, rows: &[usize], phi: &WeightDiag) -> Result<Dataset> {
    phi.validate(rows)?;
    d.select_rows(rows)?.scale_rows(&phi.weights)
}

/// Minimizer of `||Phi* y* - Phi* X* beta||^2 + lambda_tilde ||beta||^2`.
///
/// Residuals in the returned fit are the weighted residuals of the r rows.
pub fn weighted_ridge_solve(
    d: &Dataset,
    rows: &[usize],
    phi: &WeightDiag,
    lambda_tilde: f64,
) -> Result<RidgeFit> {
    let sub = weighted_rows(d, rows, phi)?;
    ridge_solve(&sub, lambda_tilde)
}

/// `(X' W X + lambda I)^-1 X' W y` over the full data for a diagonal `W`.
pub fn multiplicity_ridge_solve(
    d: &Dataset,
    w: &[f64],
    lambda_tilde: f64,
) -> Result<DVector<f64>> {
    if w.len() != d.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} rows",
            w.len(),
            d.n()
        )));
    }
    let p = d.p();
    let mut gram = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let xi = d.x().row(i).transpose();
        gram.ger(wi, &xi, &xi, 1.0);
        rhs.axpy(wi * d.y()[i], &xi, 1.0);
    }
    let f = factorize_gram(&gram, lambda_tilde)?;
    Ok(f.solve(&rhs))
}
