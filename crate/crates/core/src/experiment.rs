//! Replicated subsampling benchmarks and their reports.
//!
//! A run evaluates every (method, r) cell on every replicate. Each replicate
//! gets fresh data (a new simulated dataset, or a new train/test split of a
//! CSV), a reference ridge parameter chosen by GCV on the full training data,
//! and the full-sample fit at that parameter. Every cell then:
//!
//! 1. builds the method's plan and draws (or selects) r rows,
//! 2. picks λ̃ on the weighted subsample according to the [`LambdaPolicy`],
//! 3. fits the weighted ridge estimator and records its errors.
//!
//! All randomness is keyed by `(seed, replicate, method, r)`, so reports are
//! identical for any number of worker threads.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, split_indices, standardize, Dataset, ResponseColumn};
use crate::error::{Error, Result};
use crate::leverage::LeverageProfile;
use crate::ridge::{ridge_solve, weighted_ridge_solve};
use crate::rng::derive_seed;
use crate::sampling::{SamplingContext, StrategyRegistry, SubsamplingStrategy};
use crate::simgen::{generate, SimConfig};
use crate::theory::median;
use crate::tuning::{gcv, tune_subsample, LambdaGrid, TuningMethod};

pub const DEFAULT_R_GRID: [usize; 7] = [100, 200, 400, 800, 1600, 3200, 6400];
pub const DEFAULT_REPLICATES: usize = 20;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

pub const LONG_CSV_HEADER: &str = "method,r,replicate,metric,value,seed";

const DATA_STREAM: u64 = 0xD47A;
const SPLIT_STREAM: u64 = 0x5917;
const CELL_STREAM: u64 = 0xCE11;
const FOLD_STREAM: u64 = 0xF01D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub path: PathBuf,
    /// Column name, or a zero-based index written as an integer.
    pub response: String,
    pub drop_columns: Vec<String>,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Simulation(SimConfig),
    Csv(CsvSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaPolicy {
    SubsampleGcv,
    SubsampleKfold { k: usize },
    Fixed { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub source: DataSource,
    pub methods: Vec<String>,
    pub r_grid: Vec<usize>,
    pub replicates: usize,
    pub lambda_policy: LambdaPolicy,
    pub grid: LambdaGrid,
    pub seed: u64,
    /// Overrides the full-data GCV choice for the reference fit and the
    /// leverage-based plans.
    pub reference_lambda: Option<f64>,
    /// Worker threads; `None` uses the global rayon pool.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl ExperimentSpec {
    /// Default benchmark around `source`: every built-in method, the doubling
    /// r grid 100..6400, 20 replicates, subsample GCV on the default λ grid.
    pub fn new(source: DataSource) -> Self {
        ExperimentSpec {
            source,
            methods: ["ROPT", "ROPT_ACC", "RLEV", "RUNIF", "OPT", "IBOSS"]
                .map(String::from)
                .to_vec(),
            r_grid: DEFAULT_R_GRID.to_vec(),
            replicates: DEFAULT_REPLICATES,
            lambda_policy: LambdaPolicy::SubsampleGcv,
            grid: LambdaGrid::default(),
            seed: 0,
            reference_lambda: None,
            threads: None,
        }
    }

    fn validate(&self, registry: &StrategyRegistry) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.r_grid.is_empty() || self.r_grid[0] == 0 {
            return Err(Error::InvalidArgument("r grid must be non-empty and positive".into()));
        }
        if self.r_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("r grid must be strictly increasing".into()));
        }
        registry.resolve(&self.methods)?;
        match self.lambda_policy {
            LambdaPolicy::SubsampleKfold { k } if k < 2 => {
                Err(Error::InvalidArgument(format!("K-fold policy needs k >= 2, got {k}")))
            }
            LambdaPolicy::Fixed { lambda } if !(lambda >= 0.0) => Err(Error::InvalidArgument(
                format!("fixed lambda must be nonnegative, got {lambda}"),
            )),
            _ => Ok(()),
        }
    }
}

/// One (method, r, replicate) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub method: String,
    pub r: usize,
    pub replicate: usize,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
}

impl Record {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// Wall-clock seconds spent in each stage of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub method: String,
    pub r: usize,
    pub replicate: usize,
    pub plan_seconds: f64,
    pub select_seconds: f64,
    pub tune_seconds: f64,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub r: usize,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// `log10(mean)`; absent when the mean is not positive.
    pub log10_mean: Option<f64>,
}

/// Per-replicate quantities shared by all cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub replicate: usize,
    pub data_seed: u64,
    pub n_train: usize,
    pub lambda_reference: f64,
    /// `max h_ii / mean h_ii` at the reference λ (absent when λ = 0).
    pub leverage_heterogeneity: Option<f64>,
    /// `||beta_hat - beta||^2` (simulations).
    pub full_mse_true: Option<f64>,
    /// Test mean squared prediction error of the full-sample fit (CSV runs).
    pub full_test_error: Option<f64>,
    pub full_fit_seconds: f64,
    pub leverage_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub n: usize,
    pub p: usize,
    pub records: Vec<Record>,
    pub aggregates: Vec<Aggregate>,
    pub replicates: Vec<ReplicateSummary>,
    pub timings: Vec<Timing>,
    pub warnings: Vec<String>,
    /// Methods whose median `mse_full` increases between consecutive r.
    pub monotonicity_flags: Vec<String>,
    pub crate_version: String,
    pub threads: usize,
}

impl ExperimentReport {
    pub fn aggregate(&self, method: &str, r: usize, metric: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.r == r && a.metric == metric)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

struct Prepared {
    train: Dataset,
    test: Option<Dataset>,
    beta_true: Option<DVector<f64>>,
    data_seed: u64,
}

/// Dispatch on the experiment's data source.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    match spec.source {
        DataSource::Simulation(_) => run_simulation(spec),
        DataSource::Csv(_) => run_realdata(spec),
    }
}

/// Replicated benchmark on freshly simulated data per replicate.
pub fn run_simulation(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let DataSource::Simulation(cfg) = &spec.source else {
        return Err(Error::InvalidArgument("run_simulation needs a simulation source".into()));
    };
    cfg.validate()?;
    let cfg = cfg.clone();
    let prepare = move |rep: usize| -> Result<Prepared> {
        let data_seed = derive_seed(spec.seed, &[DATA_STREAM, rep as u64]);
        let (raw, truth) = generate(&SimConfig { seed: data_seed, ..cfg.clone() })?;
        let (train, stats) = standardize(&raw)?;
        // Truth expressed in the standardized coordinates the model is fit in.
        let beta = DVector::from_fn(raw.p(), |j, _| truth.beta_true[j] * stats.column_scales[j]);
        Ok(Prepared {
            train,
            test: None,
            beta_true: Some(beta),
            data_seed,
        })
    };
    let (n, p) = match &spec.source {
        DataSource::Simulation(c) => (c.n, c.p),
        _ => unreachable!(),
    };
    execute(spec, n, p, n, &prepare)
}

/// Replicated benchmark on a CSV: per replicate, a fresh train/test split,
/// standardization by training statistics, and test-set prediction error.
pub fn run_realdata(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let DataSource::Csv(src) = &spec.source else {
        return Err(Error::InvalidArgument("run_realdata needs a CSV source".into()));
    };
    let full = load_csv(&src.path, &ResponseColumn::from(src.response.as_str()), &src.drop_columns)?;
    let n_train = split_indices(full.n(), src.train_fraction, 0)?.train_indices.len();
    let fraction = src.train_fraction;
    let prepare = |rep: usize| -> Result<Prepared> {
        let data_seed = derive_seed(spec.seed, &[SPLIT_STREAM, rep as u64]);
        let split = split_indices(full.n(), fraction, data_seed)?;
        let (train, stats) = standardize(&full.select_rows(&split.train_indices)?)?;
        let test = stats.apply(&full.select_rows(&split.test_indices)?)?;
        Ok(Prepared {
            train,
            test: Some(test),
            beta_true: None,
            data_seed,
        })
    };
    execute(spec, full.n(), full.p(), n_train, &prepare)
}

fn execute(
    spec: &ExperimentSpec,
    n: usize,
    p: usize,
    n_train: usize,
    prepare: &(dyn Fn(usize) -> Result<Prepared> + Sync),
) -> Result<ExperimentReport> {
    let registry = StrategyRegistry::with_defaults();
    spec.validate(&registry)?;
    if let Some(&r) = spec.r_grid.iter().find(|&&r| r > n_train) {
        return Err(Error::SubsampleTooLarge { r, n: n_train });
    }
    let strategies = registry.resolve(&spec.methods)?;

    let mut warnings = Vec::new();
    if strategies.iter().any(|s| !s.strategy().is_randomized()) {
        for &r in spec.r_grid.iter().filter(|&&r| r < 2 * p) {
            warnings.push(format!(
                "IBOSS with r = {r} < 2p = {}: fewer than one extreme pair per column",
                2 * p
            ));
        }
    }

    let body = || -> Result<(Vec<ReplicateOutput>, usize)> {
        let outputs = (0..spec.replicates)
            .into_par_iter()
            .map(|rep| run_replicate(spec, &strategies, rep, prepare(rep)?))
            .collect::<Result<Vec<_>>>()?;
        Ok((outputs, rayon::current_num_threads()))
    };
    let (outputs, threads) = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(body)?,
        None => body()?,
    };

    let mut records = Vec::new();
    let mut timings = Vec::new();
    let mut summaries = Vec::new();
    for out in outputs {
        records.extend(out.records);
        timings.extend(out.timings);
        summaries.push(out.summary);
    }
    let rank = |m: &str| spec.methods.iter().position(|x| x == m).unwrap_or(usize::MAX);
    records.sort_by(|a, b| {
        (rank(&a.method), a.r, a.replicate).cmp(&(rank(&b.method), b.r, b.replicate))
    });
    let aggregates = aggregate(&records);
    let monotonicity_flags = monotonicity_flags(&aggregates, &spec.methods, "mse_full");

    Ok(ExperimentReport {
        spec: spec.clone(),
        n,
        p,
        records,
        aggregates,
        replicates: summaries,
        timings,
        warnings,
        monotonicity_flags,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
    })
}

struct ReplicateOutput {
    records: Vec<Record>,
    timings: Vec<Timing>,
    summary: ReplicateSummary,
}

fn name_key(name: &str) -> u64 {
    // FNV-1a, so a method's random stream does not depend on its list position.
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn run_replicate(
    spec: &ExperimentSpec,
    strategies: &[std::sync::Arc<dyn SubsamplingStrategy>],
    rep: usize,
    data: Prepared,
) -> Result<ReplicateOutput> {
    let train = &data.train;
    let started = Instant::now();
    let lambda_ref = match (spec.reference_lambda, spec.lambda_policy) {
        (Some(l), _) => l,
        (None, LambdaPolicy::Fixed { lambda }) => lambda,
        (None, _) => gcv(train, &spec.grid)?.lambda_star,
    };
    let full = ridge_solve(train, lambda_ref)?;
    let full_fit_seconds = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let ctx = if lambda_ref > 0.0 {
        let profile = crate::leverage::exact_ridge_leverage(train, lambda_ref)?;
        SamplingContext::new(train, Some(lambda_ref)).with_ridge_leverage(profile)
    } else {
        SamplingContext::new(train, Some(lambda_ref))
    };
    let leverage_seconds = started.elapsed().as_secs_f64();
    let heterogeneity = ctx.ridge_leverage().ok().map(LeverageProfile::heterogeneity);

    let test_error = |beta: &DVector<f64>| -> Option<f64> {
        data.test
            .as_ref()
            .map(|t| (t.y() - t.x() * beta).norm_squared() / t.n() as f64)
    };

    let mut records = Vec::new();
    let mut timings = Vec::new();
    for strategy in strategies {
        let name = strategy.name().to_string();
        let t0 = Instant::now();
        let plan = strategy.plan(&ctx)?;
        let plan_seconds = t0.elapsed().as_secs_f64();

        for &r in &spec.r_grid {
            let seed = derive_seed(spec.seed, &[CELL_STREAM, rep as u64, name_key(&name), r as u64]);
            let t1 = Instant::now();
            let sub = strategy.select(&ctx, plan.as_ref(), r, seed)?;
            let select_seconds = t1.elapsed().as_secs_f64();

            let t2 = Instant::now();
            let lambda_tilde = match spec.lambda_policy {
                LambdaPolicy::Fixed { lambda } => lambda,
                LambdaPolicy::SubsampleGcv => {
                    tune_subsample(train, &sub, &spec.grid, TuningMethod::Gcv, seed)?.lambda_star
                }
                LambdaPolicy::SubsampleKfold { k } => {
                    let fold_seed = derive_seed(seed, &[FOLD_STREAM]);
                    tune_subsample(train, &sub, &spec.grid, TuningMethod::KFold { k }, fold_seed)?
                        .lambda_star
                }
            };
            let tune_seconds = t2.elapsed().as_secs_f64();

            let t3 = Instant::now();
            let fit = weighted_ridge_solve(train, &sub.indices, &sub.weights, lambda_tilde)?;
            let fit_seconds = t3.elapsed().as_secs_f64();

            let mut metrics = BTreeMap::new();
            let mut put = |name: &str, value: f64, with_log: bool| {
                metrics.insert(name.to_string(), value);
                if with_log && value > 0.0 {
                    metrics.insert(format!("log10_{name}"), value.log10());
                }
            };
            put("mse_full", (&fit.beta - &full.beta).norm_squared(), true);
            put("lambda_tilde", lambda_tilde, false);
            put("lambda_gap", (lambda_tilde - lambda_ref).abs(), false);
            if let Some(beta) = &data.beta_true {
                put("mse_true", (&fit.beta - beta).norm_squared(), true);
            }
            if let Some(err) = test_error(&fit.beta) {
                put("test_error", err, true);
            }
            records.push(Record {
                method: name.clone(),
                r,
                replicate: rep,
                seed,
                metrics,
            });
            timings.push(Timing {
                method: name.clone(),
                r,
                replicate: rep,
                plan_seconds,
                select_seconds,
                tune_seconds,
                fit_seconds,
            });
        }
    }

    Ok(ReplicateOutput {
        records,
        timings,
        summary: ReplicateSummary {
            replicate: rep,
            data_seed: data.data_seed,
            n_train: train.n(),
            lambda_reference: lambda_ref,
            leverage_heterogeneity: heterogeneity,
            full_mse_true: data.beta_true.as_ref().map(|b| (&full.beta - b).norm_squared()),
            full_test_error: test_error(&full.beta),
            full_fit_seconds,
            leverage_seconds,
        },
    })
}

/// Mean, median and log10-mean of every metric per (method, r), in record order.
pub fn aggregate(records: &[Record]) -> Vec<Aggregate> {
    let mut order: Vec<(String, usize, String)> = Vec::new();
    let mut groups: BTreeMap<(String, usize, String), Vec<f64>> = BTreeMap::new();
    for rec in records {
        for (metric, &value) in &rec.metrics {
            let key = (rec.method.clone(), rec.r, metric.clone());
            let slot = groups.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                Vec::new()
            });
            slot.push(value);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let mut values = groups.remove(&key).unwrap_or_default();
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let med = median(&mut values);
            let (method, r, metric) = key;
            Aggregate {
                method,
                r,
                metric,
                count,
                mean,
                median: med,
                log10_mean: (mean > 0.0 && mean.is_finite()).then(|| mean.log10()),
            }
        })
        .collect()
}

fn monotonicity_flags(aggs: &[Aggregate], methods: &[String], metric: &str) -> Vec<String> {
    let mut flags = Vec::new();
    for m in methods {
        let series: Vec<&Aggregate> = aggs
            .iter()
            .filter(|a| &a.method == m && a.metric == metric)
            .collect();
        for w in series.windows(2) {
            if w[1].median > w[0].median {
                flags.push(format!(
                    "{m}: median {metric} rises from {:.4e} at r = {} to {:.4e} at r = {}",
                    w[0].median, w[0].r, w[1].median, w[1].r
                ));
            }
        }
    }
    flags
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidArgument(format!("unknown report format '{other}'"))),
        }
    }
}

/// Long-format CSV: one line per (record, metric).
pub fn long_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(LONG_CSV_HEADER);
    out.push('\n');
    for rec in &report.records {
        for (metric, value) in &rec.metrics {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                rec.method, rec.r, rec.replicate, metric, value, rec.seed
            ));
        }
    }
    out
}

/// JSON writes the full report (spec, records, aggregates, timings, diagnostics);
/// CSV writes the deterministic long-format records only.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let body = match format {
        ReportFormat::Json => report.to_json()?,
        ReportFormat::Csv => long_csv(report),
    };
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Parse a long-format CSV back into records (metrics regrouped per cell).
pub fn parse_long_csv(text: &str) -> Result<Vec<Record>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != LONG_CSV_HEADER {
        return Err(Error::InvalidArgument(format!(
            "unexpected report header '{}'",
            header.join(",")
        )));
    }
    let mut records: Vec<Record> = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let bad = |col: &str| Error::NonNumeric {
            row: line + 1,
            column: col.to_string(),
            value: String::new(),
        };
        let method = field(0).to_string();
        let r: usize = field(1).parse().map_err(|_| bad("r"))?;
        let replicate: usize = field(2).parse().map_err(|_| bad("replicate"))?;
        let metric = field(3).to_string();
        let value: f64 = field(4).parse().map_err(|_| bad("value"))?;
        let seed: u64 = field(5).parse().map_err(|_| bad("seed"))?;
        match records.last_mut() {
            Some(last) if last.method == method && last.r == r && last.replicate == replicate => {
                last.metrics.insert(metric, value);
            }
            _ => records.push(Record {
                method,
                r,
                replicate,
                seed,
                metrics: BTreeMap::from([(metric, value)]),
            }),
        }
    }
    Ok(records)
}
