//! `ridgesub`: replicated subsampling benchmarks for ridge regression.
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};
use ridgesub_core::data::write_csv;
use ridgesub_core::experiment::{
    emit_report, long_csv, run, CsvSource, DataSource, ExperimentReport, ExperimentSpec,
    LambdaPolicy, ReportFormat, DEFAULT_R_GRID, DEFAULT_REPLICATES, DEFAULT_TRAIN_FRACTION,
};
use ridgesub_core::simgen::{generate, SimCase, SimConfig};
use ridgesub_core::LambdaGrid;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Source {
    Sim,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Policy {
    Gcv,
    Kfold,
    Fixed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(version, about, long_about = None)]
struct Cli {
    /// Data source
    #[arg(long, value_enum, default_value = "sim")]
    source: Source,

    /// Simulation case (1..6)
    #[arg(long, default_value_t = 1)]
    case: u8,
    /// Simulated rows
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Simulated columns
    #[arg(long, default_value_t = 50)]
    p: usize,
    /// Informative columns; defaults to 10 (cases 1-3) or 25 (cases 4-6)
    #[arg(long)]
    q: Option<usize>,
    /// Noise standard deviation
    #[arg(long, default_value_t = 3.0)]
    noise_sd: f64,

    /// Input CSV (with --source csv)
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Response column name or zero-based index
    #[arg(long)]
    response: Option<String>,
    /// Columns to drop before fitting
    #[arg(long, value_delimiter = ',')]
    drop: Vec<String>,
    /// Training fraction of the random split
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,

    /// Subsample sizes, strictly increasing
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_R_GRID)]
    r_grid: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    replicates: usize,
    /// Strategy names
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "ROPT,ROPT_ACC,RLEV,RUNIF,OPT,IBOSS"
    )]
    methods: Vec<String>,

    /// How the subsample ridge parameter is chosen
    #[arg(long, value_enum, default_value = "gcv")]
    lambda_policy: Policy,
    #[arg(long, default_value_t = 5)]
    kfold: usize,
    /// Ridge parameter for --lambda-policy fixed
    #[arg(long)]
    lambda: Option<f64>,
    /// Fixed ridge parameter for the full-sample reference fit
    #[arg(long)]
    reference_lambda: Option<f64>,

    #[arg(long, default_value_t = 1e-4)]
    grid_min: f64,
    #[arg(long, default_value_t = 1e4)]
    grid_max: f64,
    #[arg(long, default_value_t = 61)]
    grid_size: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,

    /// Write the simulated dataset for --seed to this CSV and exit
    #[arg(long)]
    export_data: Option<PathBuf>,

    /// Worker threads
    #[arg(long, env = "RIDGESUB_THREADS")]
    threads: Option<usize>,
}

impl Cli {
    fn sim_config(&self) -> anyhow::Result<SimConfig> {
        let case = SimCase::new(self.case)?;
        let cfg = SimConfig {
            n: self.n,
            p: self.p,
            q: self.q.unwrap_or_else(|| case.full_scale_q()),
            case,
            noise_sd: self.noise_sd,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn spec(&self) -> anyhow::Result<ExperimentSpec> {
        let source = match self.source {
            Source::Sim => DataSource::Simulation(self.sim_config()?),
            Source::Csv => {
                let path = self.csv.clone().context("--source csv needs --csv PATH")?;
                let response = self
                    .response
                    .clone()
                    .context("--source csv needs --response COLUMN")?;
                DataSource::Csv(CsvSource {
                    path,
                    response,
                    drop_columns: self.drop.clone(),
                    train_fraction: self.train_fraction,
                })
            }
        };
        let lambda_policy = match self.lambda_policy {
            Policy::Gcv => LambdaPolicy::SubsampleGcv,
            Policy::Kfold => LambdaPolicy::SubsampleKfold { k: self.kfold },
            Policy::Fixed => LambdaPolicy::Fixed {
                lambda: self.lambda.context("--lambda-policy fixed needs --lambda")?,
            },
        };
        if self.threads == Some(0) {
            bail!("thread count must be positive");
        }
        Ok(ExperimentSpec {
            source,
            methods: self.methods.clone(),
            r_grid: self.r_grid.clone(),
            replicates: self.replicates,
            lambda_policy,
            grid: LambdaGrid::log_spaced(self.grid_min, self.grid_max, self.grid_size)?,
            seed: self.seed,
            reference_lambda: self.reference_lambda,
            threads: self.threads,
        })
    }
}

fn print_summary(report: &ExperimentReport) {
    let metric = if report.records.iter().any(|r| r.metrics.contains_key("mse_true")) {
        "mse_true"
    } else {
        "test_error"
    };
    eprintln!("{:<10} {:>6} {:>14} {:>14} {:>12}", "method", "r", metric, "mse_full", "lambda");
    for agg in report.aggregates.iter().filter(|a| a.metric == metric) {
        let full = report.aggregate(&agg.method, agg.r, "mse_full").map_or(f64::NAN, |a| a.mean);
        let lam = report
            .aggregate(&agg.method, agg.r, "lambda_tilde")
            .map_or(f64::NAN, |a| a.median);
        eprintln!(
            "{:<10} {:>6} {:>14.6e} {:>14.6e} {:>12.4e}",
            agg.method, agg.r, agg.mean, full, lam
        );
    }
    for w in report.warnings.iter().chain(&report.monotonicity_flags) {
        eprintln!("warning: {w}");
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    if let Some(path) = &cli.export_data {
        let (data, _) = generate(&cli.sim_config()?)?;
        write_csv(&data, path).with_context(|| format!("writing {}", path.display()))?;
        return Ok(());
    }
    let spec = cli.spec()?;
    let report = run(&spec)?;
    print_summary(&report);
    let format = match cli.format {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    };
    match &cli.out {
        Some(path) => emit_report(&report, format, path)?,
        None => match format {
            ReportFormat::Json => println!("{}", report.to_json()?),
            ReportFormat::Csv => print!("{}", long_csv(&report)),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
