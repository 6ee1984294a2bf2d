//! Subsampling probabilities, with-replacement draws and deterministic
//! subdata selection.
//!
//! Each method is a [`SubsamplingStrategy`] trait object; a
//! [`StrategyRegistry`] maps names such as `"ROPT"` or `"IBOSS"` to
//! implementations so experiments can pick methods at runtime.
//!
//! | name       | probabilities                                  |
//! |------------|------------------------------------------------|
//! | `ROPT`     | `pi_i ∝ ||x_i||`                               |
//! | `ROPT_ACC` | `pi_i ∝ sqrt(1 - h_ii(lambda)) ||x_i||`        |
//! | `RLEV`     | `pi_i ∝ h_ii(lambda)`                          |
//! | `RUNIF`    | `pi_i = 1/n`                                   |
//! | `OPT`      | `pi_i ∝ h_ii(0)`                               |
//! | `IBOSS`    | none: extreme values of each column            |

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::leverage::{leverage_scores, row_norms, LeverageProfile};
use crate::ridge::{weighted_rows, WeightDiag};
use crate::rng::rng_from_seed;

/// Relative floor: probabilities below `PROBABILITY_FLOOR / n` are raised to it.
pub const PROBABILITY_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "ROPT_ACC")]
    RoptAcc,
    #[serde(rename = "ROPT")]
    Ropt,
    #[serde(rename = "RLEV")]
    Rlev,
    #[serde(rename = "RUNIF")]
    Runif,
    #[serde(rename = "OPT")]
    Opt,
    #[serde(rename = "IBOSS")]
    Iboss,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Ropt,
        Strategy::RoptAcc,
        Strategy::Rlev,
        Strategy::Runif,
        Strategy::Opt,
        Strategy::Iboss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::RoptAcc => "ROPT_ACC",
            Strategy::Ropt => "ROPT",
            Strategy::Rlev => "RLEV",
            Strategy::Runif => "RUNIF",
            Strategy::Opt => "OPT",
            Strategy::Iboss => "IBOSS",
        }
    }

    pub fn is_randomized(self) -> bool {
        self != Strategy::Iboss
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Canonical registry key: upper case with `-` and spaces folded to `_`.
pub fn canonical_name(name: &str) -> String {
    name.trim()
        .chars()
        .map(|c| match c {
            '-' | ' ' => '_',
            c => c.to_ascii_uppercase(),
        })
        .collect()
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = canonical_name(s);
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == key)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

/// Per-row subsampling probabilities, or `pi = None` for deterministic rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub pi: Option<Vec<f64>>,
    pub strategy: Strategy,
    pub lambda_used: Option<f64>,
}

impl SamplingPlan {
    pub fn probabilities(&self) -> Result<&[f64]> {
        self.pi
            .as_deref()
            .ok_or_else(|| Error::DeterministicPlan(self.strategy.name().into()))
    }

    /// Audit export with columns `index,pi`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let pi = self.probabilities()?;
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut body = String::from("index,pi\n");
        for (i, p) in pi.iter().enumerate() {
            body.push_str(&format!("{i},{p}\n"));
        }
        w.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn randomized_plan(
    raw: Vec<f64>,
    strategy: Strategy,
    lambda_used: Option<f64>,
) -> Result<SamplingPlan> {
    Ok(SamplingPlan {
        pi: Some(normalize_with_floor(raw)?),
        strategy,
        lambda_used,
    })
}

/// Normalize nonnegative scores to probabilities, floor at `PROBABILITY_FLOOR / n`, renormalize.
pub fn normalize_with_floor(raw: Vec<f64>) -> Result<Vec<f64>> {
    let n = raw.len();
    if n == 0 {
        return Err(Error::Degenerate("no rows to sample from".into()));
    }
    if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFinite("sampling scores"));
    }
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("all sampling scores are zero".into()));
    }
    let floor = PROBABILITY_FLOOR / n as f64;
    let mut pi: Vec<f64> = raw.into_iter().map(|v| (v / total).max(floor)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

/// Minimizer of the expected asymptotic variance trace: `pi_i ∝ sqrt(1 - h_ii) ||x_i||`.
pub fn plan_ropt_exact(d: &Dataset, profile: &LeverageProfile) -> Result<SamplingPlan> {
    check_profile(d, profile)?;
    if !(profile.lambda > 0.0) {
        return Err(Error::InvalidArgument(
            "ROPT_ACC needs leverage computed at lambda > 0".into(),
        ));
    }
    let raw = profile
        .h
        .iter()
        .zip(&profile.row_norms)
        .map(|(h, norm)| (1.0 - h).max(0.0).sqrt() * norm)
        .collect();
    randomized_plan(raw, Strategy::RoptAcc, Some(profile.lambda))
}

/// Averaged-leverage approximation: `pi_i ∝ ||x_i||`. Needs no ridge parameter.
pub fn plan_ropt_approx(d: &Dataset) -> Result<SamplingPlan> {
    randomized_plan(row_norms(d)?, Strategy::Ropt, None)
}

/// Ridge leverage sampling: `pi_i ∝ h_ii(lambda)`.
pub fn plan_rlev(profile: &LeverageProfile) -> Result<SamplingPlan> {
    if !(profile.lambda > 0.0) {
        return Err(Error::InvalidArgument(
            "RLEV needs leverage computed at lambda > 0".into(),
        ));
    }
    randomized_plan(profile.h.clone(), Strategy::Rlev, Some(profile.lambda))
}

pub fn plan_runif(n: usize) -> Result<SamplingPlan> {
    if n == 0 {
        return Err(Error::Degenerate("no rows to sample from".into()));
    }
    Ok(SamplingPlan {
        pi: Some(vec![1.0 / n as f64; n]),
        strategy: Strategy::Runif,
        lambda_used: None,
    })
}

/// Ordinary leverage sampling for unpenalized least squares: `pi_i ∝ h_ii(0)`.
pub fn plan_opt_linear(d: &Dataset) -> Result<SamplingPlan> {
    let profile = leverage_scores(d, 0.0)?;
    randomized_plan(profile.h, Strategy::Opt, Some(0.0))
}

fn check_profile(d: &Dataset, profile: &LeverageProfile) -> Result<()> {
    if profile.h.len() != d.n() || profile.row_norms.len() != d.n() {
        return Err(Error::DimensionMismatch(format!(
            "leverage profile for {} rows used with {} rows",
            profile.h.len(),
            d.n()
        )));
    }
    Ok(())
}

/// A realized subsample: drawn rows (with repetition), per-row counts `K_i`
/// and the per-draw weight diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    pub indices: Vec<usize>,
    pub counts: Vec<u32>,
    pub r: usize,
    pub weights: WeightDiag,
    pub strategy: Strategy,
}

impl Subsample {
    pub fn n(&self) -> usize {
        self.counts.len()
    }

    /// `(Phi* X*, Phi* y*)`.
    pub fn weighted_rows(&self, d: &Dataset) -> Result<Dataset> {
        if d.n() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "subsample of {} rows applied to {} rows",
                self.n(),
                d.n()
            )));
        }
        weighted_rows(d, &self.indices, &self.weights)
    }

    /// Full-length diagonal of `W = Omega K`.
    pub fn multiplicity_weights(&self) -> Vec<f64> {
        self.weights.multiplicity_weights(&self.indices, self.n())
    }

    /// Audit export with columns `index,count,weight` for every row drawn at least once.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut weight_of = BTreeMap::new();
        for (&i, &w) in self.indices.iter().zip(&self.weights.weights) {
            weight_of.entry(i).or_insert(w);
        }
        let mut body = String::from("index,count,weight\n");
        for (i, w) in weight_of {
            body.push_str(&format!("{i},{},{w}\n", self.counts[i]));
        }
        let path = path.as_ref();
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// `r` independent categorical draws from `plan`, seeded.
///
/// Uses [`WeightedIndex`] (cumulative weights plus binary search) on a
/// ChaCha8 stream, so a seed reproduces the same rows on every platform.
pub fn draw(plan: &SamplingPlan, r: usize, seed: u64) -> Result<Subsample> {
    let pi = plan.probabilities()?;
    if r == 0 {
        return Err(Error::InvalidArgument("subsample size must be positive".into()));
    }
    if let Some(i) = pi.iter().position(|p| !(*p > 0.0)) {
        return Err(Error::ZeroProbability(i));
    }
    let dist = WeightedIndex::new(pi).map_err(|e| Error::Degenerate(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0u32; pi.len()];
    let mut indices = Vec::with_capacity(r);
    for _ in 0..r {
        let i = dist.sample(&mut rng);
        counts[i] += 1;
        indices.push(i);
    }
    let draw_probs = indices.iter().map(|&i| pi[i]).collect();
    Ok(Subsample {
        indices,
        counts,
        r,
        weights: WeightDiag::from_draw_probabilities(draw_probs)?,
        strategy: plan.strategy,
    })
}

/// Deterministic extreme-value subdata selection.
///
/// Columns are visited in order; each contributes its `r / (2p)` smallest and
/// `r / (2p)` largest not-yet-selected rows. The remaining `r mod 2p` rows are
/// handed out as (smallest, largest) pairs starting again from the first
/// column. Ties go to the lower row index. Returned indices are ascending.
pub fn select_iboss(d: &Dataset, r: usize) -> Result<Subsample> {
    let (n, p) = (d.n(), d.p());
    if r > n {
        return Err(Error::SubsampleTooLarge { r, n });
    }
    if r == 0 {
        return Err(Error::InvalidArgument("subsample size must be positive".into()));
    }
    let x = d.x();
    let ascending: Vec<Vec<usize>> = (0..p)
        .map(|j| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| x[(a, j)].total_cmp(&x[(b, j)]).then(a.cmp(&b)));
            order
        })
        .collect();
    let descending: Vec<Vec<usize>> = (0..p)
        .map(|j| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| x[(b, j)].total_cmp(&x[(a, j)]).then(a.cmp(&b)));
            order
        })
        .collect();

    let mut selected = vec![false; n];
    let mut low = vec![0usize; p];
    let mut high = vec![0usize; p];
    let take = |order: &[usize], cursor: &mut usize, selected: &mut [bool]| {
        while selected[order[*cursor]] {
            *cursor += 1;
        }
        selected[order[*cursor]] = true;
    };

    let per_side = r / (2 * p);
    for j in 0..p {
        for _ in 0..per_side {
            take(&ascending[j], &mut low[j], &mut selected);
        }
        for _ in 0..per_side {
            take(&descending[j], &mut high[j], &mut selected);
        }
    }
    let mut remaining = r - 2 * p * per_side;
    let mut j = 0;
    while remaining > 0 {
        take(&ascending[j], &mut low[j], &mut selected);
        remaining -= 1;
        if remaining > 0 {
            take(&descending[j], &mut high[j], &mut selected);
            remaining -= 1;
        }
        j = (j + 1) % p;
    }

    let indices: Vec<usize> = (0..n).filter(|&i| selected[i]).collect();
    let counts = selected.iter().map(|&s| s as u32).collect();
    Ok(Subsample {
        r: indices.len(),
        weights: WeightDiag::unit(indices.len()),
        indices,
        counts,
        strategy: Strategy::Iboss,
    })
}

/// Shared per-dataset state for building plans: the data, the reference ridge
/// parameter, and leverage profiles computed at most once.
pub struct SamplingContext<'a> {
    data: &'a Dataset,
    lambda: Option<f64>,
    ridge_leverage: OnceLock<LeverageProfile>,
}

impl<'a> SamplingContext<'a> {
    pub fn new(data: &'a Dataset, lambda: Option<f64>) -> Self {
        SamplingContext {
            data,
            lambda,
            ridge_leverage: OnceLock::new(),
        }
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    /// Ridge leverage at the reference lambda, computed on first use.
    pub fn ridge_leverage(&self) -> Result<&LeverageProfile> {
        if let Some(p) = self.ridge_leverage.get() {
            return Ok(p);
        }
        let lambda = self.lambda.ok_or_else(|| {
            Error::InvalidArgument("leverage-based plans need a reference ridge parameter".into())
        })?;
        let profile = crate::leverage::exact_ridge_leverage(self.data, lambda)?;
        Ok(self.ridge_leverage.get_or_init(|| profile))
    }

    /// Seed an already computed profile (must match the reference lambda).
    pub fn with_ridge_leverage(self, profile: LeverageProfile) -> Self {
        let _ = self.ridge_leverage.set(profile);
        self
    }
}

/// A subsampling method selectable by name.
pub trait SubsamplingStrategy: Send + Sync {
    fn strategy(&self) -> Strategy;

    fn name(&self) -> &'static str {
        self.strategy().name()
    }

    fn description(&self) -> &'static str;

    /// Sampling probabilities, or `None` for deterministic selection rules.
    fn plan(&self, ctx: &SamplingContext<'_>) -> Result<Option<SamplingPlan>>;

    /// Realize a subsample of size `r`. The default draws from `plan`.
    fn select(
        &self,
        ctx: &SamplingContext<'_>,
        plan: Option<&SamplingPlan>,
        r: usize,
        seed: u64,
    ) -> Result<Subsample> {
        match plan {
            Some(plan) => {
                if r > ctx.data().n() {
                    return Err(Error::SubsampleTooLarge {
                        r,
                        n: ctx.data().n(),
                    });
                }
                draw(plan, r, seed)
            }
            None => Err(Error::DeterministicPlan(self.name().into())),
        }
    }
}

pub struct RoptApprox;
pub struct RoptExact;
pub struct RidgeLeverage;
pub struct Uniform;
pub struct LinearLeverage;
pub struct Iboss;

impl SubsamplingStrategy for RoptApprox {
    fn strategy(&self) -> Strategy {
        Strategy::Ropt
    }
    fn description(&self) -> &'static str {
        "row-norm probabilities (averaged ridge leverage)"
    }
    fn plan(&self, ctx: &SamplingContext<'_>) -> Result<Option<SamplingPlan>> {
        plan_ropt_approx(ctx.data()).map(Some)
    }
}

impl SubsamplingStrategy for RoptExact {
    fn strategy(&self) -> Strategy {
        Strategy::RoptAcc
    }
    fn description(&self) -> &'static str {
        "sqrt(1 - ridge leverage) times row norm"
    }
    fn plan(&self, ctx: &SamplingContext<'_>) -> Result<Option<SamplingPlan>> {
        plan_ropt_exact(ctx.data(), ctx.ridge_leverage()?).map(Some)
    }
}

impl SubsamplingStrategy for RidgeLeverage {
    fn strategy(&self) -> Strategy {
        Strategy::Rlev
    }
    fn description(&self) -> &'static str {
        "ridge leverage scores"
    }
    fn plan(&self, ctx: &SamplingContext<'_>) -> Result<Option<SamplingPlan>> {
        plan_rlev(ctx.ridge_leverage()?).map(Some)
    }
}

impl SubsamplingStrategy for Uniform {
    fn strategy(&self) -> Strategy {
        Strategy::Runif
    }
    fn description(&self) -> &'static str {
        "uniform probabilities"
    }
    fn plan(&self, ctx: &SamplingContext<'_>) -> Result<Option<SamplingPlan>> {
        plan_runif(ctx.data().n()).map(Some)
    }
}

impl SubsamplingStrategy for LinearLeverage {
    fn strategy(&self) -> Strategy {
        Strategy::Opt
    }
    fn description(&self) -> &'static str {
        "unpenalized leverage scores"
    }
    fn plan(&self, ctx: &SamplingContext<'_>) -> Result<Option<SamplingPlan>> {
        plan_opt_linear(ctx.data()).map(Some)
    }
}

impl SubsamplingStrategy for Iboss {
    fn strategy(&self) -> Strategy {
        Strategy::Iboss
    }
    fn description(&self) -> &'static str {
        "deterministic extreme values per column"
    }
    fn plan(&self, _ctx: &SamplingContext<'_>) -> Result<Option<SamplingPlan>> {
        Ok(None)
    }
    fn select(
        &self,
        ctx: &SamplingContext<'_>,
        _plan: Option<&SamplingPlan>,
        r: usize,
        _seed: u64,
    ) -> Result<Subsample> {
        select_iboss(ctx.data(), r)
    }
}

/// Name -> strategy lookup.
#[derive(Clone, Default)]
pub struct StrategyRegistry {
    entries: BTreeMap<String, Arc<dyn SubsamplingStrategy>>,
}

impl StrategyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// All six built-in methods.
    pub fn with_defaults() -> Self {
        let mut reg = Self::new();
        reg.register(Arc::new(RoptApprox));
        reg.register(Arc::new(RoptExact));
        reg.register(Arc::new(RidgeLeverage));
        reg.register(Arc::new(Uniform));
        reg.register(Arc::new(LinearLeverage));
        reg.register(Arc::new(Iboss));
        reg
    }

    /// Insert or replace; returns the strategy previously registered under the same name.
    pub fn register(
        &mut self,
        strategy: Arc<dyn SubsamplingStrategy>,
    ) -> Option<Arc<dyn SubsamplingStrategy>> {
        self.entries.insert(canonical_name(strategy.name()), strategy)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn SubsamplingStrategy>> {
        self.entries
            .get(&canonical_name(name))
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    }

    pub fn resolve<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<Arc<dyn SubsamplingStrategy>>> {
        names.iter().map(|n| self.get(n.as_ref())).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl fmt::Debug for StrategyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}
