mod common;

use std::fs;
use std::process::Command;

use common::{ar1, conjugate_csv, config, dataset, read_rows, write};
use tbmice::commands::{cmd_benchmark, cmd_diagnose, cmd_impute, cmd_inject};
use tbmice::io::{load_csv, LoadOptions};
use tbmice_core::baselines::impute_locf;
use tbmice_core::diagnostics::SUMMARY_HEADER;
use tbmice_core::metrics::Metric;
use tbmice_core::TimeSeriesDataset;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tbmice"))
}

#[test]
fn inject_writes_mask_truth_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "ar.csv", &dataset(&["a", "b"], &[ar1(400, 0.8, 1), ar1(400, 0.5, 2)]));
    let out = dir.path().join("inj");
    let cfg = config(&format!("data = {}\nout = {}\nrate = 0.2\nseed = 3\n", data.display(), out.display()));
    let res = cmd_inject(&cfg).unwrap();
    assert!((res.realized_rate - 0.2).abs() < 0.05);
    let masked = load_csv(&res.masked_path, &LoadOptions::default()).unwrap();
    let (header, rows) = read_rows(&res.truth_path);
    assert_eq!(header, ["row", "column", "true_value"]);
    assert_eq!(rows.len(), res.injected);
    assert_eq!(masked.mask().total_missing(), res.injected);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 3") && manifest.contains("manifest.realized_rate"));
}

#[test]
fn rate_zero_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "ar.csv", &dataset(&["a"], &[ar1(50, 0.8, 1)]));
    let status = bin()
        .args(["inject", "--rate", "0", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("o"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let status = bin().args(["impute", "--method", "brits", "--data"]).arg(&data).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn locf_impute_matches_the_baseline_and_creates_the_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let toy = TimeSeriesDataset::from_rows(&[vec![Some(1.0)], vec![None], vec![Some(3.0)]]).unwrap();
    let data = write(dir.path(), "toy.csv", &toy);
    let out = dir.path().join("deep/nested/out");
    let status = bin()
        .args(["impute", "--method", "locf", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let got = load_csv(&out.join("imputation_1.csv"), &LoadOptions::default()).unwrap();
    assert_eq!(got.values(), impute_locf(&toy).unwrap().values());
    assert!(out.join("pooled.csv").exists() && out.join("manifest.txt").exists());
}

#[test]
fn bayesian_impute_reports_positive_predictive_sd() {
    let dir = tempfile::tempdir().unwrap();
    let x = ar1(200, 0.7, 4);
    let y: Vec<f64> = x.iter().enumerate().map(|(t, v)| 2.0 * v + 0.1 * ((t * 7919 % 101) as f64 / 101.0 - 0.5)).collect();
    let data = write(dir.path(), "lin.csv", &dataset(&["x", "y"], &[x, y]));
    let inj = dir.path().join("inj");
    cmd_inject(&config(&format!("data = {}\nout = {}\nmasked_vars = y\n", data.display(), inj.display()))).unwrap();
    let out = dir.path().join("imp");
    let cfg = config(&format!(
        "data = {}\ntruth = {}\nout = {}\nmethods = tbayes-mala\niters = 600\nsweeps = 3\nimputations = 2\n",
        inj.join("masked.csv").display(),
        inj.join("ground_truth.csv").display(),
        out.display()
    ));
    let res = cmd_impute(&cfg).unwrap();
    let (header, rows) = read_rows(&out.join("uncertainty.csv"));
    assert_eq!(header, ["row", "column", "predictive_mean", "predictive_sd", "within", "between", "total"]);
    assert_eq!(rows.len(), res.results[0].cells.len());
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap() > 0.0));
    let (trace_header, trace) = read_rows(&out.join("traces/y_chain1.csv"));
    assert_eq!(trace_header.first().unwrap(), "iteration");
    assert_eq!(&trace_header[trace_header.len() - 3..], ["tau2", "log_posterior", "accepted"]);
    assert_eq!(trace.len(), 480);
    let nrmse = res.report.unwrap().get("y", "tbayes-mala", Metric::Nrmse).unwrap().mean;
    assert!(nrmse < 0.2, "{nrmse}");
}

#[test]
fn benchmark_linear_beats_mean_on_ar1() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "ar.csv", &dataset(&["a"], &[ar1(300, 0.8, 5)]));
    let out = dir.path().join("bench");
    let cfg = config(&format!("data = {}\nout = {}\nmethods = mean,linear\nruns = 3\n", data.display(), out.display()));
    let res = cmd_benchmark(&cfg).unwrap();
    let get = |m: &str| res.report.get("a", m, Metric::Nrmse).unwrap().mean;
    assert!(get("linear") < get("mean"));
    let (header, _) = read_rows(&out.join("report.csv"));
    assert_eq!(header, ["variable", "method", "sampler", "metric", "mean", "sd", "runs"]);
    let (_, per_run) = read_rows(&out.join("per_run.csv"));
    for method in ["mean", "linear"] {
        for metric in Metric::ALL {
            let n = per_run.iter().filter(|r| r[2] == method && r[4] == metric.name()).count();
            assert_eq!(n, 3);
        }
    }
}

#[test]
fn benchmark_rerun_from_manifest_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "ar.csv", &dataset(&["a", "b"], &[ar1(200, 0.8, 6), ar1(200, 0.6, 7)]));
    let first = dir.path().join("b1");
    cmd_benchmark(&config(&format!(
        "data = {}\nout = {}\nmethods = mice,knn\nruns = 2\nseed = 11\n",
        data.display(),
        first.display()
    )))
    .unwrap();
    let second = dir.path().join("b2");
    let status = bin()
        .arg("benchmark")
        .arg("--config")
        .arg(first.join("manifest.txt"))
        .arg("--out")
        .arg(&second)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read(first.join("report.csv")).unwrap(), fs::read(second.join("report.csv")).unwrap());
}

#[test]
fn diagnose_passes_on_conjugate_target() {
    let dir = tempfile::tempdir().unwrap();
    let data = conjugate_csv(dir.path(), 300, 8);
    let out = dir.path().join("diag");
    let cfg = config(&format!(
        "data = {}\nout = {}\nmethods = tbayes-mala\nmasked_vars = y\nlags = 0\nsweeps = 3\nchains = 2\niters = 5000\n",
        data.display(),
        out.display()
    ));
    let res = cmd_diagnose(&cfg).unwrap();
    assert!(res.passed, "{:?}", res.summaries);
    let (header, rows) = read_rows(&out.join("summary_y.csv"));
    assert_eq!(header, SUMMARY_HEADER);
    let params: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(params, ["b", "w1", "w2", "w3", "tau"]);
    assert!(out.join("trace_y_chain2.csv").exists());
}

#[test]
fn diagnose_fails_with_tiny_fixed_scale() {
    let dir = tempfile::tempdir().unwrap();
    let data = conjugate_csv(dir.path(), 300, 9);
    let out = dir.path().join("diag");
    let cfg = config(&format!(
        "data = {}\nout = {}\nmethods = tbayes-rwm\nmasked_vars = y\nlags = 0\nsweeps = 2\niters = 2000\nadapt = false\ninitial_scale = 0.001\n",
        data.display(),
        out.display()
    ));
    let res = cmd_diagnose(&cfg).unwrap();
    assert!(!res.passed);
    let (_, summary) = &res.summaries[0];
    assert!(summary.rows.iter().any(|r| r.ess.value().unwrap_or(0.0) < 400.0));
}

#[test]
fn diagnose_needs_two_chains() {
    let dir = tempfile::tempdir().unwrap();
    let data = conjugate_csv(dir.path(), 50, 1);
    let cfg = config(&format!("data = {}\nchains = 1\nmasked_vars = y\n", data.display()));
    assert!(cmd_diagnose(&cfg).unwrap_err().is::<tbmice::ConfigError>());
}

#[test]
fn airquality_layout_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("AirQualityUCI.csv");
    fs::write(
        &path,
        "Date;Time;CO(GT);PT08.S1(CO);NMHC(GT);C6H6(GT);PT08.S2(NMHC);NOx(GT);T;RH;;\n\
         10/03/2004;18.00.00;2,6;1360;150;11,9;1046;166;13,6;48,9;;\n\
         10/03/2004;19.00.00;2;1292;112;9,4;955;103;13,3;47,7;;\n\
         10/03/2004;20.00.00;-200;1402;88;9,0;939;131;11,9;54,0;;\n\
         10/03/2004;21.00.00;2,2;1376;80;9,2;948;172;11,0;60,0;;\n\
         ;;;;;;;;;;;\n",
    )
    .unwrap();
    let cfg = config(&format!("preset = airquality\ndata = {}\n", path.display()));
    let ds = tbmice::commands::load_data(&cfg).unwrap();
    assert_eq!(ds.names(), ["CO(GT)", "PT08.S1(CO)", "NMHC(GT)", "C6H6(GT)", "PT08.S2(NMHC)", "T"]);
    assert_eq!(ds.nrows(), 3);
    assert_eq!(ds.values()[(0, 0)], 2.6);
    let ts = ds.timestamps().unwrap();
    assert_eq!(ts[2] - ts[1], 2 * 3600);
    let all = config(&format!("preset = airquality\ncomplete_cases = false\ndata = {}\n", path.display()));
    let ds = tbmice::commands::load_data(&all).unwrap();
    assert_eq!((ds.nrows(), ds.mask().total_missing()), (4, 1));
}
