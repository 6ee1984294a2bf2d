//! Asymptotic behaviour of the subsample estimator around the full-sample fit.
//!
//! With `M = (X'X + lambda I)^-1`, `e = y - X beta_hat` and probabilities `pi`:
//!
//! ```text
//! Sigma_c = r^-1 M (sum_i e_i^2 x_i x_i' / pi_i) M
//! AVar    = Sigma_c - lambda^2 r^-1 M beta_hat beta_hat' M
//! AE      = beta_hat + (lambda - lambda_tilde) M beta_hat
//! AMSE    = AVar + (lambda - lambda_tilde)^2 M beta_hat beta_hat' M
//! E tr(Sigma_c) = r^-1 sum_i (1 - h_ii) ||x_i||^2 / pi_i
//! ```
//!
//! The Monte Carlo helpers here draw many subsamples from a fixed plan and
//! summarize the estimator, so the closed forms can be checked empirically.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::leverage::LeverageProfile;
use crate::ridge::{multiplicity_ridge_solve, RidgeFit, RidgeSystem};
use crate::rng::derive_seed;
use crate::sampling::{draw, SamplingPlan};

/// `(X'X + lambda I)^-1`.
pub fn gram_inverse(d: &Dataset, lambda: f64) -> Result<DMatrix<f64>> {
    Ok(RidgeSystem::new(d).factorize(lambda)?.inverse())
}

fn positive_probabilities<'a>(plan: &'a SamplingPlan, n: usize) -> Result<&'a [f64]> {
    let pi = plan.probabilities()?;
    if pi.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "plan over {} rows used with {n} rows",
            pi.len()
        )));
    }
    if let Some(i) = pi.iter().position(|p| !(*p > 0.0)) {
        return Err(Error::ZeroProbability(i));
    }
    Ok(pi)
}

/// The probability-dependent core `Sigma_c` of the asymptotic variance.
pub fn sigma_c(d: &Dataset, fit: &RidgeFit, plan: &SamplingPlan, r: usize) -> Result<DMatrix<f64>> {
    let pi = positive_probabilities(plan, d.n())?;
    if fit.residuals.len() != d.n() {
        return Err(Error::DimensionMismatch(
            "Sigma_c needs residuals of the full-sample fit".into(),
        ));
    }
    let m = gram_inverse(d, fit.lambda)?;
    let p = d.p();
    let mut meat = DMatrix::zeros(p, p);
    for i in 0..d.n() {
        let xi = d.x().row(i).transpose();
        let w = fit.residuals[i].powi(2) / pi[i];
        meat.ger(w, &xi, &xi, 1.0);
    }
    let mut s = &m * meat * &m / r as f64;
    symmetrize(&mut s);
    Ok(s)
}

/// `E tr(Sigma_c) = r^-1 sum_i (1 - h_ii) ||x_i||^2 / pi_i`.
pub fn expected_trace_objective(
    d: &Dataset,
    profile: &LeverageProfile,
    plan: &SamplingPlan,
    r: usize,
) -> Result<f64> {
    let pi = positive_probabilities(plan, d.n())?;
    if profile.n() != d.n() {
        return Err(Error::DimensionMismatch("leverage profile length".into()));
    }
    let total: f64 = profile
        .h
        .iter()
        .zip(&profile.row_norms)
        .zip(pi)
        .map(|((h, norm), p)| (1.0 - h) * norm * norm / p)
        .sum();
    Ok(total / r as f64)
}

/// The lower bound `{sum_i sqrt(1 - h_ii) ||x_i||}^2 / r` over all probability vectors.
pub fn holder_bound(profile: &LeverageProfile, r: usize) -> f64 {
    let s: f64 = profile
        .h
        .iter()
        .zip(&profile.row_norms)
        .map(|(h, norm)| (1.0 - h).max(0.0).sqrt() * norm)
        .sum();
    s * s / r as f64
}

fn outer_m_beta(gram_inv: &DMatrix<f64>, beta_hat: &DVector<f64>) -> DMatrix<f64> {
    let v = gram_inv * beta_hat;
    &v * v.transpose()
}

/// `AVar = Sigma_c - lambda^2 r^-1 M beta_hat beta_hat' M`.
pub fn avar(
    sigma_c: &DMatrix<f64>,
    gram_inv: &DMatrix<f64>,
    beta_hat: &DVector<f64>,
    lambda: f64,
    r: usize,
) -> DMatrix<f64> {
    sigma_c - outer_m_beta(gram_inv, beta_hat) * (lambda * lambda / r as f64)
}

/// Asymptotic mean and mean squared error matrix of the subsample estimator.
pub fn ae_and_amse(
    beta_hat: &DVector<f64>,
    lambda: f64,
    lambda_tilde: f64,
    gram_inv: &DMatrix<f64>,
    sigma_c: &DMatrix<f64>,
    r: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let shift = lambda - lambda_tilde;
    let ae = beta_hat + gram_inv * beta_hat * shift;
    let amse = avar(sigma_c, gram_inv, beta_hat, lambda, r)
        + outer_m_beta(gram_inv, beta_hat) * (shift * shift);
    (ae, amse)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

/// Symmetric matrix with no eigenvalue below `-tol * max |eigenvalue|`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    let eig = m.clone().symmetric_eigenvalues();
    let scale = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    eig.iter().all(|&v| v >= -tol * scale.max(f64::MIN_POSITIVE))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Asymptotic quantities for one (dataset, plan, r, lambda_tilde) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub sigma_c: Vec<Vec<f64>>,
    pub avar: Vec<Vec<f64>>,
    pub ae: Vec<f64>,
    pub amse: Vec<Vec<f64>>,
    pub trace_sigma_c: f64,
    pub trace_avar: f64,
    pub trace_amse: f64,
    pub r: usize,
    pub lambda: f64,
    pub lambda_tilde: f64,
    /// Whether AVar is numerically positive semidefinite; small r can break this.
    pub avar_psd: bool,
}

impl TheoryReport {
    pub fn compute(
        d: &Dataset,
        fit: &RidgeFit,
        plan: &SamplingPlan,
        r: usize,
        lambda_tilde: f64,
    ) -> Result<Self> {
        let s = sigma_c(d, fit, plan, r)?;
        let m = gram_inverse(d, fit.lambda)?;
        let v = avar(&s, &m, &fit.beta, fit.lambda, r);
        let (ae, amse) = ae_and_amse(&fit.beta, fit.lambda, lambda_tilde, &m, &s, r);
        Ok(TheoryReport {
            trace_sigma_c: s.trace(),
            trace_avar: v.trace(),
            trace_amse: amse.trace(),
            avar_psd: is_psd(&v, 1e-8),
            sigma_c: to_rows(&s),
            avar: to_rows(&v),
            ae: ae.iter().copied().collect(),
            amse: to_rows(&amse),
            r,
            lambda: fit.lambda,
            lambda_tilde,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Subsample estimate in the full-data form `(X'WX + lambda_tilde I)^-1 X'Wy`
/// for the subsample drawn with `seed`.
fn subsample_estimate(
    d: &Dataset,
    plan: &SamplingPlan,
    r: usize,
    lambda_tilde: f64,
    seed: u64,
) -> Result<(DVector<f64>, Vec<f64>)> {
    let sub = draw(plan, r, seed)?;
    let w = sub.multiplicity_weights();
    Ok((multiplicity_ridge_solve(d, &w, lambda_tilde)?, w))
}

/// Empirical mean and covariance of the subsample estimator over `draws` replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub draws: usize,
}

impl MonteCarloMoments {
    /// Standard error of each component of the mean.
    pub fn standard_errors(&self) -> DVector<f64> {
        self.covariance
            .diagonal()
            .map(|v| (v / self.draws as f64).sqrt())
    }
}

/// Replicate seeds are `derive_seed(seed, [k])`; results do not depend on thread count.
pub fn subsample_moments(
    d: &Dataset,
    plan: &SamplingPlan,
    r: usize,
    lambda_tilde: f64,
    draws: usize,
    seed: u64,
) -> Result<MonteCarloMoments> {
    if draws < 2 {
        return Err(Error::InvalidArgument("need at least two Monte Carlo draws".into()));
    }
    let betas: Vec<DVector<f64>> = (0..draws)
        .into_par_iter()
        .map(|k| subsample_estimate(d, plan, r, lambda_tilde, derive_seed(seed, &[k as u64])).map(|(b, _)| b))
        .collect::<Result<_>>()?;
    Ok(moments(&betas))
}

/// Two-pass sample mean and (n - 1)-normalized covariance in input order.
pub fn moments(samples: &[DVector<f64>]) -> MonteCarloMoments {
    let n = samples.len();
    let p = samples[0].len();
    let mut mean = DVector::zeros(p);
    for s in samples {
        mean += s;
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(p, p);
    for s in samples {
        let c = s - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= (n - 1) as f64;
    MonteCarloMoments {
        mean,
        covariance: cov,
        draws: n,
    }
}

/// `beta_tilde - beta_hat - (M X'W e - lambda_tilde M beta_hat)`: what is left after
/// the two first-order terms.
pub fn remainder(
    d: &Dataset,
    fit: &RidgeFit,
    gram_inv: &DMatrix<f64>,
    w: &[f64],
    beta_tilde: &DVector<f64>,
    lambda_tilde: f64,
) -> DVector<f64> {
    beta_tilde - &fit.beta - first_order_term(d, gram_inv, w, &fit.residuals)
        + gram_inv * &fit.beta * lambda_tilde
}

/// `M X' W e`.
pub fn first_order_term(
    d: &Dataset,
    gram_inv: &DMatrix<f64>,
    w: &[f64],
    e: &DVector<f64>,
) -> DVector<f64> {
    let we = DVector::from_fn(d.n(), |i, _| w[i] * e[i]);
    gram_inv * d.x().tr_mul(&we)
}

/// Outcome of the remainder-decay experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    /// Least-squares slope of `ln(median remainder)` on `ln(r)`.
    pub slope: f64,
    /// `(r, median remainder norm)` per subsample size.
    pub medians: Vec<(usize, f64)>,
}

/// Measure how fast the remainder beyond the first-order expansion shrinks
/// with r, at `lambda_tilde = lambda`. An `O(1/r)` remainder gives slope ≈ -1.
pub fn remainder_decay_check(
    d: &Dataset,
    plan: &SamplingPlan,
    lambda: f64,
    r_grid: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<DecayCheck> {
    if replicates < 20 {
        return Err(Error::InvalidArgument(format!(
            "at least 20 replicates required, got {replicates}"
        )));
    }
    let (lo, hi) = match (r_grid.iter().min(), r_grid.iter().max()) {
        (Some(&lo), Some(&hi)) if lo > 0 => (lo, hi),
        _ => return Err(Error::InvalidArgument("empty or zero subsample-size grid".into())),
    };
    if (hi as f64) < 10.0 * lo as f64 {
        return Err(Error::InvalidArgument(
            "subsample sizes must span at least a decade".into(),
        ));
    }
    let fit = crate::ridge::ridge_solve(d, lambda)?;
    let m = gram_inverse(d, lambda)?;

    let mut medians = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let mut norms: Vec<f64> = (0..replicates)
            .into_par_iter()
            .map(|k| {
                let s = derive_seed(seed, &[r as u64, k as u64]);
                let (beta_tilde, w) = subsample_estimate(d, plan, r, lambda, s)?;
                Ok(remainder(d, &fit, &m, &w, &beta_tilde, lambda).norm())
            })
            .collect::<Result<_>>()?;
        medians.push((r, median(&mut norms)));
    }
    let xs: Vec<f64> = medians.iter().map(|&(r, _)| (r as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|&(_, m)| m.ln()).collect();
    Ok(DecayCheck {
        slope: ols_slope(&xs, &ys),
        medians,
    })
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub(crate) fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
