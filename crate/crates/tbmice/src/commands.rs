//! The four subcommands. Each returns a small outcome value (used by tests)
//! and prints a human-readable summary to stdout.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use tbmice_core::diagnostics::{default_labels, summarize, DiagnosticsSummary, ESS_THRESHOLD, RHAT_THRESHOLD};
use tbmice_core::imputation::{pool_imputations, ImputationResult};
use tbmice_core::metrics::{aggregate_runs, score, Metric, MetricsReport};
use tbmice_core::missingness::{inject_mar, inject_mcar, GroundTruthMask, MaskDescriptor, Mechanism};
use tbmice_core::TimeSeriesDataset;

use crate::config::{ConfigError, ExperimentConfig};
use crate::io;
use crate::methods::Method;

/// Manifest lines beyond the config echo use this key prefix, which the
/// config parser skips, so a manifest can be fed back through `--config`.
pub const MANIFEST_PREFIX: &str = "manifest.";

struct Manifest {
    command: &'static str,
    started: Instant,
    extra: Vec<(String, String)>,
}

impl Manifest {
    fn new(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            extra: Vec::new(),
        }
    }

    fn add(&mut self, key: impl Into<String>, value: impl ToString) {
        self.extra.push((key.into(), value.to_string()));
    }

    fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
        let mut text = format!(
            "{MANIFEST_PREFIX}command = {}\n{MANIFEST_PREFIX}version = {}\n",
            self.command,
            env!("CARGO_PKG_VERSION")
        );
        text.push_str(&cfg.render());
        for (k, v) in &self.extra {
            text.push_str(&format!("{MANIFEST_PREFIX}{k} = {v}\n"));
        }
        text.push_str(&format!(
            "{MANIFEST_PREFIX}wall_time_s = {:.3}\n",
            self.started.elapsed().as_secs_f64()
        ));
        io::write_atomic(&dir.join("manifest.txt"), text.as_bytes())
    }
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<TimeSeriesDataset> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| ConfigError("`data` is required".into()))?;
    io::load_csv(path, &cfg.load)
}

/// Keeps only fully observed rows.
pub fn complete_cases(ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    let keep: Vec<usize> = (0..ds.nrows()).filter(|&t| ds.mask().row_missing_count(t) == 0).collect();
    if keep.is_empty() {
        bail!("no complete rows");
    }
    Ok(ds.select_rows(&keep)?)
}

fn masked_columns(cfg: &ExperimentConfig, ds: &TimeSeriesDataset) -> Result<Vec<usize>, ConfigError> {
    cfg.masked_vars
        .iter()
        .map(|name| {
            ds.column_index(name)
                .ok_or_else(|| ConfigError(format!("masked variable `{name}` is not a column of the data")))
        })
        .collect()
}

/// Injects missingness per the configuration with an explicit seed.
pub fn inject_with(cfg: &ExperimentConfig, ds: &TimeSeriesDataset, seed: u64) -> Result<(TimeSeriesDataset, GroundTruthMask)> {
    let cols = masked_columns(cfg, ds)?;
    let out = match cfg.mechanism {
        Mechanism::Mcar => inject_mcar(ds, cfg.rate, &cols, seed)?,
        Mechanism::Mar => {
            if cols.is_empty() {
                return Err(ConfigError("MAR injection needs `masked_vars`".into()).into());
            }
            inject_mar(ds, &cols, cfg.rate, seed)?
        }
    };
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectOutcome {
    pub injected: usize,
    /// Injected cells over the targeted cells.
    pub realized_rate: f64,
    /// Injected cells over all cells.
    pub overall_rate: f64,
    pub masked_path: PathBuf,
    pub truth_path: PathBuf,
}

pub fn cmd_inject(cfg: &ExperimentConfig) -> Result<InjectOutcome> {
    let mut manifest = Manifest::new("inject");
    let ds = load_data(cfg)?;
    let (masked, truth) = inject_with(cfg, &ds, cfg.seed)?;
    let targeted = truth.descriptor.masked_vars.len() * ds.nrows();
    let outcome = InjectOutcome {
        injected: truth.len(),
        realized_rate: truth.len() as f64 / targeted as f64,
        overall_rate: truth.len() as f64 / (ds.nrows() * ds.ncols()) as f64,
        masked_path: cfg.out.join("masked.csv"),
        truth_path: cfg.out.join("ground_truth.csv"),
    };
    io::write_dataset(&outcome.masked_path, &masked)?;
    io::write_ground_truth(&outcome.truth_path, &truth, ds.names())?;
    manifest.add("injected_cells", outcome.injected);
    manifest.add("realized_rate", outcome.realized_rate);
    manifest.add("overall_rate", outcome.overall_rate);
    manifest.write(cfg, &cfg.out)?;
    println!(
        "injected {} cells ({}): realized rate {:.4} over targeted columns, {:.4} overall",
        outcome.injected, cfg.mechanism, outcome.realized_rate, outcome.overall_rate
    );
    Ok(outcome)
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn resolved_methods(cfg: &ExperimentConfig) -> Result<Vec<String>, ConfigError> {
    let methods = cfg.resolved_methods();
    if methods.is_empty() {
        return Err(ConfigError("no method given (use --method)".into()));
    }
    Ok(methods)
}

#[derive(Debug, Clone)]
pub struct ImputeOutcome {
    pub results: Vec<ImputationResult>,
    /// Scores of the pooled datasets when a ground truth was supplied.
    pub report: Option<MetricsReport>,
}

pub fn cmd_impute(cfg: &ExperimentConfig) -> Result<ImputeOutcome> {
    let methods = resolved_methods(cfg)?;
    let mut manifest = Manifest::new("impute");
    let ds = load_data(cfg)?;
    let truth = match &cfg.truth {
        Some(path) => {
            let descriptor = MaskDescriptor {
                mechanism: cfg.mechanism,
                rate: cfg.rate,
                seed: cfg.seed,
                masked_vars: Vec::new(),
            };
            Some(io::read_ground_truth(path, &ds, descriptor)?)
        }
        None => None,
    };
    let mut results = Vec::new();
    let mut report = MetricsReport::default();
    for name in &methods {
        let mut method = Method::from_name(name, cfg, cfg.seed)?;
        if let Method::Tbayes(c) = &mut method {
            c.keep_chains = true;
        }
        let dir = if methods.len() == 1 { cfg.out.clone() } else { cfg.out.join(name) };
        let result = method.run(&ds)?;
        for (r, imp) in result.imputations.iter().enumerate() {
            io::write_dataset(&dir.join(format!("imputation_{}.csv", r + 1)), imp)?;
        }
        let pooled = pool_imputations(&result)?;
        io::write_dataset(&dir.join("pooled.csv"), &pooled.dataset)?;
        io::write_uncertainty(&dir.join("uncertainty.csv"), &pooled.cells, ds.names())?;
        if let Some(vars) = result.chains.first() {
            for v in vars {
                let var = file_safe(&ds.names()[v.column]);
                let params = default_labels(v.labels.len());
                for (c, chain) in v.chains.iter().enumerate() {
                    io::write_trace(&dir.join("traces").join(format!("{var}_chain{}.csv", c + 1)), chain, &params)?;
                }
                io::write_param_labels(&dir.join("traces").join(format!("{var}_params.csv")), &params, &v.labels)?;
            }
        }
        manifest.add(format!("{name}.imputations"), result.m());
        let seeds: Vec<String> = result.seeds.iter().map(u64::to_string).collect();
        manifest.add(format!("{name}.seeds"), seeds.join(","));
        manifest.add(format!("{name}.config_hash"), format!("{:016x}", result.config_hash));
        if let Some(truth) = &truth {
            report.extend(score(&pooled.dataset, truth, name, method.sampler())?);
        }
        println!(
            "{name}: {} imputation(s), {} missing cells, outputs in {}",
            result.m(),
            result.cells.len(),
            dir.display()
        );
        results.push(result);
    }
    let report = if truth.is_some() {
        io::write_report(&cfg.out.join("report.csv"), &report)?;
        print_report(&report);
        Some(report)
    } else {
        None
    };
    manifest.write(cfg, &cfg.out)?;
    Ok(ImputeOutcome { results, report })
}

fn print_report(report: &MetricsReport) {
    for row in report.rows.iter().filter(|r| r.metric == Metric::Nrmse) {
        println!(
            "  {:<16} {:<14} nrmse {:.4} (sd {:.4}, runs {})",
            row.variable, row.method, row.mean, row.sd, row.runs
        );
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub report: MetricsReport,
    pub per_run: Vec<(usize, MetricsReport)>,
    /// `(run, error)` of aborted runs.
    pub aborted: Vec<(usize, String)>,
    pub report_path: PathBuf,
}

/// Seed of benchmark run `r` (1-based).
pub fn run_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(1000 * r as u64)
}

fn benchmark_run(cfg: &ExperimentConfig, ds: &TimeSeriesDataset, methods: &[String], r: usize) -> Result<MetricsReport> {
    let seed = run_seed(cfg.seed, r);
    let (masked, truth) = inject_with(cfg, ds, seed).context("injection")?;
    let mut report = MetricsReport::default();
    for name in methods {
        let method = Method::from_name(name, cfg, seed)?;
        let result = method.run(&masked)?;
        let pooled = pool_imputations(&result)?;
        report.extend(score(&pooled.dataset, &truth, name, method.sampler())?);
    }
    Ok(report)
}

pub fn cmd_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkOutcome> {
    let methods = resolved_methods(cfg)?;
    for name in &methods {
        Method::from_name(name, cfg, cfg.seed)?;
    }
    let mut manifest = Manifest::new("benchmark");
    let ds = complete_cases(&load_data(cfg)?)?;
    manifest.add("rows", ds.nrows());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let outcomes: Vec<(usize, Result<MetricsReport>)> = pool.install(|| {
        (1..=cfg.runs)
            .into_par_iter()
            .map(|r| (r, benchmark_run(cfg, &ds, &methods, r)))
            .collect()
    });
    let mut per_run = Vec::new();
    let mut aborted = Vec::new();
    for (r, res) in outcomes {
        manifest.add(format!("run.{r}.seed"), run_seed(cfg.seed, r));
        match res {
            Ok(rep) => {
                manifest.add(format!("run.{r}.status"), "ok");
                per_run.push((r, rep));
            }
            Err(e) => {
                let msg = format!("{e:#}").replace('\n', " ");
                manifest.add(format!("run.{r}.status"), format!("aborted: {msg}"));
                eprintln!("run {r} aborted: {msg}");
                aborted.push((r, msg));
            }
        }
    }
    let reports: Vec<MetricsReport> = per_run.iter().map(|(_, r)| r.clone()).collect();
    let report = if reports.is_empty() {
        MetricsReport::default()
    } else {
        aggregate_runs(&reports)?
    };
    let report_path = cfg.out.join("report.csv");
    io::write_per_run(&cfg.out.join("per_run.csv"), &per_run)?;
    io::write_report(&report_path, &report)?;
    manifest.add("runs_completed", per_run.len());
    manifest.add("runs_aborted", aborted.len());
    manifest.write(cfg, &cfg.out)?;
    if per_run.is_empty() || aborted.len() * 10 > cfg.runs {
        bail!("{} of {} benchmark runs aborted", aborted.len(), cfg.runs);
    }
    println!("benchmark: {} runs, methods {}", per_run.len(), methods.join(", "));
    print_report(&report);
    Ok(BenchmarkOutcome {
        report,
        per_run,
        aborted,
        report_path,
    })
}

#[derive(Debug, Clone)]
pub struct DiagnoseOutcome {
    /// `(variable, summary)` for every imputed variable.
    pub summaries: Vec<(String, DiagnosticsSummary)>,
    pub passed: bool,
}

pub fn cmd_diagnose(cfg: &ExperimentConfig) -> Result<DiagnoseOutcome> {
    let methods = cfg.resolved_methods();
    let name = if methods.is_empty() {
        "tbayes".to_string()
    } else {
        methods
            .iter()
            .find(|m| m.starts_with("tbayes"))
            .cloned()
            .ok_or_else(|| ConfigError("diagnose needs a tbayes method".into()))?
    };
    if cfg.chains < 2 {
        return Err(ConfigError("diagnose needs at least 2 chains".into()).into());
    }
    let mut manifest = Manifest::new("diagnose");
    let mut ds = load_data(cfg)?;
    if ds.is_complete() {
        ds = inject_with(cfg, &ds, cfg.seed)?.0;
        manifest.add("injected", "true");
    }
    let mut method = Method::from_name(&name, cfg, cfg.seed)?;
    if let Method::Tbayes(c) = &mut method {
        c.imputations = 1;
        c.keep_chains = true;
    }
    let result = method.run(&ds)?;
    let vars = result
        .chains
        .first()
        .ok_or_else(|| anyhow!("no chains were produced (nothing to impute?)"))?;
    let mut summaries = Vec::new();
    let mut passed = true;
    println!("{} with {} chains x {} iterations", method.name(), cfg.chains, cfg.iters);
    for v in vars {
        let var_name = ds.names()[v.column].clone();
        let safe = file_safe(&var_name);
        let params = default_labels(v.labels.len());
        let summary = summarize(&v.chains, Some(&params), None)?;
        io::write_summary(&cfg.out.join(format!("summary_{safe}.csv")), &summary)?;
        io::write_param_labels(&cfg.out.join(format!("params_{safe}.csv")), &params, &v.labels)?;
        for (c, chain) in v.chains.iter().enumerate() {
            io::write_trace(&cfg.out.join(format!("trace_{safe}_chain{}.csv", c + 1)), chain, &params)?;
        }
        let ok = summary.converged();
        passed &= ok;
        let worst_rhat = summary.rows.iter().filter_map(|r| r.rhat.value()).fold(f64::NAN, f64::max);
        let min_ess = summary.rows.iter().filter_map(|r| r.ess.value()).fold(f64::NAN, f64::min);
        let acc: Vec<String> = summary.acceptance.iter().map(|a| format!("{a:.3}")).collect();
        println!(
            "{}  {var_name}: max rhat {worst_rhat:.4}, min ess {min_ess:.0}, acceptance [{}]",
            if ok { "PASS" } else { "FAIL" },
            acc.join(", ")
        );
        manifest.add(format!("{safe}.verdict"), if ok { "PASS" } else { "FAIL" });
        summaries.push((var_name, summary));
    }
    manifest.add("seed", result.seeds[0]);
    manifest.write(cfg, &cfg.out)?;
    println!(
        "verdict: {} (rhat < {RHAT_THRESHOLD}, ess > {ESS_THRESHOLD})",
        if passed { "PASS" } else { "FAIL" }
    );
    Ok(DiagnoseOutcome { summaries, passed })
}
