use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use tbmice::commands;
use tbmice::config::{load_pairs, parse_pairs, ConfigError, ExperimentConfig, Pairs};

/// Time-series imputation experiments: missingness injection, imputation,
/// benchmarking and MCMC diagnostics.
#[derive(Debug, Parser)]
#[command(name = "tbmice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mask cells of a complete dataset and keep their true values.
    Inject,
    /// Impute a dataset with one or more methods.
    Impute,
    /// Repeated inject → impute → score runs, aggregated into a report.
    Benchmark,
    /// Run the Bayesian sampler and report convergence diagnostics.
    Diagnose,
}

/// Every flag maps onto the config key of the same name and overrides the
/// config file.
#[derive(Debug, Args)]
struct Flags {
    /// Input CSV.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Imputation method (repeatable): linear, locf, mean, median, knn,
    /// seasonal, mice, tbayes, tbayes-rwm, tbayes-mala.
    #[arg(long = "method", global = true)]
    methods: Vec<String>,
    /// rwm | rwm-identity | rwm-precision | mala.
    #[arg(long, global = true)]
    sampler: Option<String>,
    /// mcar | mar.
    #[arg(long, global = true)]
    mechanism: Option<String>,
    #[arg(long, global = true)]
    rate: Option<String>,
    /// Comma-separated column names to mask.
    #[arg(long, global = true)]
    masked_vars: Option<String>,
    /// Lag order `L` or `past:future`.
    #[arg(long, global = true)]
    lags: Option<String>,
    /// Iterations per final chain, burn-in included.
    #[arg(long, global = true)]
    iters: Option<String>,
    #[arg(long, global = true)]
    burn_in: Option<String>,
    #[arg(long, global = true)]
    chains: Option<String>,
    /// Sweeps K.
    #[arg(long, global = true)]
    sweeps: Option<String>,
    /// Imputations m.
    #[arg(long, global = true)]
    imputations: Option<String>,
    /// mean | time-aware.
    #[arg(long, global = true)]
    init: Option<String>,
    #[arg(long, global = true)]
    runs: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset preset, e.g. `airquality`.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Ground-truth CSV for scoring `impute` output.
    #[arg(long, global = true)]
    truth: Option<PathBuf>,
    /// Benchmark worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<String>,
    /// Any other config key, as `key=value` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Flags {
    fn pairs(&self) -> Result<Pairs, ConfigError> {
        let mut out: Pairs = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        push("preset", self.preset.clone());
        push("data", path(&self.data));
        if !self.methods.is_empty() {
            push("methods", Some(self.methods.join(",")));
        }
        push("sampler", self.sampler.clone());
        push("mechanism", self.mechanism.clone());
        push("rate", self.rate.clone());
        push("masked_vars", self.masked_vars.clone());
        push("lags", self.lags.clone());
        push("iters", self.iters.clone());
        push("burn_in", self.burn_in.clone());
        push("chains", self.chains.clone());
        push("sweeps", self.sweeps.clone());
        push("imputations", self.imputations.clone());
        push("init", self.init.clone());
        push("runs", self.runs.clone());
        push("seed", self.seed.clone());
        push("out", path(&self.out));
        push("truth", path(&self.truth));
        push("workers", self.workers.clone());
        for kv in &self.set {
            out.extend(parse_pairs(kv)?);
        }
        Ok(out)
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut pairs = match &cli.flags.config {
        Some(path) => load_pairs(path)?,
        None => Vec::new(),
    };
    pairs.extend(cli.flags.pairs()?);
    let cfg = ExperimentConfig::from_pairs(&pairs)?;
    match cli.command {
        Command::Inject => commands::cmd_inject(&cfg).map(drop),
        Command::Impute => commands::cmd_impute(&cfg).map(drop),
        Command::Benchmark => commands::cmd_benchmark(&cfg).map(drop),
        Command::Diagnose => commands::cmd_diagnose(&cfg).map(drop),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<ConfigError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
