use std::time::Instant;

use ridgesub_core::data::{standardize, write_csv};
use ridgesub_core::experiment::{
    emit_report, long_csv, parse_long_csv, run, run_realdata, run_simulation, aggregate, CsvSource,
    DataSource, ExperimentReport, ExperimentSpec, LambdaPolicy, ReportFormat, LONG_CSV_HEADER,
};
use ridgesub_core::leverage::exact_ridge_leverage;
use ridgesub_core::ridge::ridge_solve;
use ridgesub_core::sampling::{plan_ropt_approx, plan_runif};
use ridgesub_core::simgen::{generate, SimCase, SimConfig};
use ridgesub_core::theory::{avar, gram_inverse, sigma_c};
use ridgesub_core::{Error, LambdaGrid};

fn sim_spec(case: u8, n: usize, p: usize, q: usize) -> ExperimentSpec {
    let cfg = SimConfig::scaled(SimCase::new(case).unwrap(), n, p, q, q, 0);
    ExperimentSpec {
        grid: LambdaGrid::log_spaced(1e-2, 1e4, 25).unwrap(),
        ..ExperimentSpec::new(DataSource::Simulation(cfg))
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn metric_values(report: &ExperimentReport, method: &str, r: usize, metric: &str) -> Vec<f64> {
    report
        .records
        .iter()
        .filter(|rec| rec.method == method && rec.r == r)
        .map(|rec| rec.metric(metric).unwrap())
        .collect()
}

#[test]
fn rerun_with_same_seed_is_identical() {
    let spec = ExperimentSpec {
        replicates: 1,
        r_grid: vec![50, 100],
        seed: 42,
        ..sim_spec(2, 2000, 8, 3)
    };
    let a = run_simulation(&spec).unwrap();
    let b = run_simulation(&spec).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(long_csv(&a), long_csv(&b));
}

#[test]
fn thread_count_does_not_change_csv() {
    let base = ExperimentSpec {
        replicates: 3,
        r_grid: vec![60, 120],
        methods: vec!["ROPT".into(), "RLEV".into(), "IBOSS".into()],
        lambda_policy: LambdaPolicy::SubsampleKfold { k: 5 },
        seed: 7,
        ..sim_spec(3, 1500, 6, 2)
    };
    let outputs: Vec<String> = [1, 2, 5]
        .iter()
        .map(|&t| long_csv(&run(&ExperimentSpec { threads: Some(t), ..base.clone() }).unwrap()))
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn uniform_full_size_subsample_is_close_to_full_fit() {
    let n = 800;
    let lambda = 5.0;
    let spec = ExperimentSpec {
        methods: vec!["RUNIF".into()],
        r_grid: vec![n],
        replicates: 40,
        lambda_policy: LambdaPolicy::Fixed { lambda },
        seed: 3,
        ..sim_spec(1, n, 5, 2)
    };
    let report = run(&spec).unwrap();
    assert!(report.replicates.iter().all(|s| s.lambda_reference == lambda));
    // E||beta_tilde - beta_hat||^2 is approximately tr(AVar), replicate by replicate.
    let mut ratios = Vec::new();
    for (rec, summary) in report.records.iter().zip(&report.replicates) {
        let cfg = match &spec.source {
            DataSource::Simulation(c) => SimConfig { seed: summary.data_seed, ..c.clone() },
            _ => unreachable!(),
        };
        let (d, _) = standardize(&generate(&cfg).unwrap().0).unwrap();
        let fit = ridge_solve(&d, lambda).unwrap();
        let s = sigma_c(&d, &fit, &plan_runif(n).unwrap(), n).unwrap();
        let v = avar(&s, &gram_inverse(&d, lambda).unwrap(), &fit.beta, lambda, n);
        ratios.push(rec.metric("mse_full").unwrap() / v.trace());
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    // ||.||^2 of a p-variate quantity has relative sd about sqrt(2/p); 40 replicates.
    assert!((mean - 1.0).abs() < 0.35, "mean ratio {mean}");
}

fn write_case2_csv(dir: &std::path::Path, n: usize) -> std::path::PathBuf {
    let cfg = SimConfig::scaled(SimCase::new(2).unwrap(), n, 20, 5, 5, 123);
    let (d, _) = generate(&cfg).unwrap();
    let path = dir.join("case2.csv");
    write_csv(&d, &path).unwrap();
    path
}

fn csv_spec(path: std::path::PathBuf) -> ExperimentSpec {
    ExperimentSpec {
        grid: LambdaGrid::log_spaced(1e-2, 1e4, 25).unwrap(),
        ..ExperimentSpec::new(DataSource::Csv(CsvSource {
            path,
            response: "y".into(),
            drop_columns: vec![],
            train_fraction: 0.7,
        }))
    }
}

#[test]
fn realdata_small_r_favors_ropt() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec {
        methods: vec!["ROPT".into(), "RUNIF".into()],
        r_grid: vec![100],
        replicates: 20,
        seed: 1,
        ..csv_spec(write_case2_csv(dir.path(), 20_000))
    };
    let report = run_realdata(&spec).unwrap();
    let ropt = median(metric_values(&report, "ROPT", 100, "mse_full"));
    let unif = median(metric_values(&report, "RUNIF", 100, "mse_full"));
    assert!(ropt < unif, "ROPT {ropt} vs RUNIF {unif}");

    // The full-sample fit predicts at least as well as any r = 100 fit, up to noise.
    let full = median(report.replicates.iter().map(|s| s.full_test_error.unwrap()).collect());
    for m in ["ROPT", "RUNIF"] {
        let sub = median(metric_values(&report, m, 100, "test_error"));
        assert!(full <= sub * 1.01, "{m}: full {full} vs subsample {sub}");
    }
    assert!(report.records.iter().all(|r| r.metric("mse_true").is_none()));
}

#[test]
fn realdata_rejects_oversized_subsample() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec {
        r_grid: vec![100, 800],
        replicates: 1,
        ..csv_spec(write_case2_csv(dir.path(), 1000))
    };
    let err = run_realdata(&spec).unwrap_err();
    assert!(matches!(err, Error::SubsampleTooLarge { r: 800, n: 700 }));
    assert!(err.to_string().contains("subsample size 800 exceeds training size 700"));
}

#[test]
fn realdata_propagates_ingestion_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,y\n1,2\nx,3\n").unwrap();
    assert!(matches!(run_realdata(&csv_spec(path)), Err(Error::NonNumeric { .. })));
    let missing = csv_spec(dir.path().join("absent.csv"));
    assert!(matches!(run(&missing), Err(Error::Io { .. })));
}

#[test]
fn emitted_reports_parse_back() {
    let spec = ExperimentSpec {
        replicates: 3,
        r_grid: vec![40, 80, 160],
        methods: vec!["ROPT".into(), "OPT".into()],
        seed: 9,
        ..sim_spec(1, 1200, 6, 3)
    };
    let report = run(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("r.csv");
    let json_path = dir.path().join("r.json");
    emit_report(&report, ReportFormat::Csv, &csv_path).unwrap();
    emit_report(&report, ReportFormat::Json, &json_path).unwrap();

    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().next(), Some(LONG_CSV_HEADER));
    assert!(text.contains(",log10_mse_true,"));
    let records = parse_long_csv(&text).unwrap();
    assert_eq!(aggregate(&records), report.aggregates);

    let back = ExperimentReport::from_json(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(back.aggregates, report.aggregates);
    assert_eq!(aggregate(&back.records), report.aggregates);
    assert_eq!(back.timings.len(), report.records.len());
    assert_eq!(back.replicates.len(), 3);
}

#[test]
fn emit_reports_io_failure() {
    let report = run(&ExperimentSpec { methods: vec![], r_grid: vec![50], ..sim_spec(1, 300, 4, 2) }).unwrap();
    let err = emit_report(&report, ReportFormat::Csv, "/nonexistent-dir/x/report.csv").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

fn min_seconds(mut f: impl FnMut()) -> f64 {
    (0..5)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn plan_costs_scale_as_expected() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let data = |n: usize, p: usize| {
            let cfg = SimConfig::scaled(SimCase::new(1).unwrap(), n, p, 2, 2, 1);
            generate(&cfg).unwrap().0
        };
        // Linear in n at fixed p.
        let (small, large) = (data(50_000, 20), data(200_000, 20));
        let t1 = min_seconds(|| drop(plan_ropt_approx(&small).unwrap()));
        let t2 = min_seconds(|| drop(plan_ropt_approx(&large).unwrap()));
        let ratio = t2 / t1;
        assert!((2.0..=8.0).contains(&ratio), "approx plan n-ratio {ratio}");

        let t1 = min_seconds(|| drop(exact_ridge_leverage(&small, 1.0).unwrap()));
        let t2 = min_seconds(|| drop(exact_ridge_leverage(&large, 1.0).unwrap()));
        let ratio = t2 / t1;
        assert!((2.0..=8.0).contains(&ratio), "exact leverage n-ratio {ratio}");

        // Quadratic in p at fixed n.
        let (narrow, wide) = (data(20_000, 16), data(20_000, 64));
        let t1 = min_seconds(|| drop(exact_ridge_leverage(&narrow, 1.0).unwrap()));
        let t2 = min_seconds(|| drop(exact_ridge_leverage(&wide, 1.0).unwrap()));
        let ratio = t2 / t1;
        assert!((8.0..=32.0).contains(&ratio), "exact leverage p-ratio {ratio}");
    });
}
