//! Experiment configuration: a flat `key = value` text format. Command-line
//! flags are turned into the same pairs and applied after the file, so they
//! win. [`ExperimentConfig::render`] writes a file that loads back to the same
//! configuration, which is what manifests embed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tbmice_core::design::{Initialization, LagOrder, TimeFeature, TimeFeatureSpec};
use tbmice_core::mice_classic::VisitOrder;
use tbmice_core::missingness::Mechanism;
use tbmice_core::posterior::PriorSpec;
use tbmice_core::samplers::{MalaConvention, SamplerKind};

use crate::io::{LoadOptions, TimestampSource};

/// Invalid or unusable configuration (exit code 2).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub String);

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Method names accepted by `--method`.
pub const METHODS: [&str; 10] = [
    "linear",
    "locf",
    "mean",
    "median",
    "knn",
    "seasonal",
    "mice",
    "tbayes",
    "tbayes-rwm",
    "tbayes-mala",
];

const AIRQUALITY_COLUMNS: [&str; 6] = ["CO(GT)", "PT08.S1(CO)", "NMHC(GT)", "C6H6(GT)", "PT08.S2(NMHC)", "T"];

/// Ordered `key = value` pairs; later pairs override earlier ones.
pub type Pairs = Vec<(String, String)>;

/// Parses the flat text format. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Pairs, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("line {}: expected `key = value`", i + 1)))?;
        out.push((normalize_key(k), v.trim().to_string()));
    }
    Ok(out)
}

fn normalize_key(k: &str) -> String {
    let k = k.trim().replace('-', "_");
    match k.as_str() {
        "method" => "methods".into(),
        "iterations" => "iters".into(),
        "K" => "sweeps".into(),
        "m" => "imputations".into(),
        _ => k,
    }
}

pub fn load_pairs(path: &Path) -> Result<Pairs, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err(format!("reading {}: {e}", path.display())))?;
    parse_pairs(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    /// Dataset preset (`airquality`) that fills in the load options.
    pub preset: Option<String>,
    pub load: LoadOptions,
    pub mechanism: Mechanism,
    pub rate: f64,
    /// Column names eligible for masking; empty means every column (MCAR).
    pub masked_vars: Vec<String>,
    pub methods: Vec<String>,
    pub sampler: SamplerKind,
    pub mala_convention: MalaConvention,
    pub lags: LagOrder,
    pub iters: usize,
    pub burn_in: f64,
    pub chains: usize,
    pub inner_draws: usize,
    pub sweeps: usize,
    pub imputations: usize,
    pub init: Initialization,
    pub time_features: TimeFeatureSpec,
    pub prior: PriorSpec,
    pub adapt: bool,
    pub initial_scale: f64,
    pub knn_k: usize,
    pub seasonal_period: Option<usize>,
    pub visit_order: VisitOrder,
    pub runs: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads for benchmark runs (0 = all cores).
    pub workers: usize,
    /// Ground-truth CSV from `inject`, used to score `impute` output.
    pub truth: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            preset: None,
            load: LoadOptions::default(),
            mechanism: Mechanism::Mcar,
            rate: 0.2,
            masked_vars: Vec::new(),
            methods: Vec::new(),
            sampler: SamplerKind::RwmEmpirical,
            mala_convention: MalaConvention::AsPrinted,
            lags: LagOrder::symmetric(1),
            iters: 5000,
            burn_in: 0.2,
            chains: 2,
            inner_draws: 300,
            sweeps: 10,
            imputations: 5,
            init: Initialization::Mean,
            time_features: TimeFeatureSpec::none(),
            prior: PriorSpec::default(),
            adapt: true,
            initial_scale: 1.0,
            knn_k: 5,
            seasonal_period: None,
            visit_order: VisitOrder::Column,
            runs: 5,
            seed: 0,
            out: PathBuf::from("out"),
            workers: 0,
            truth: None,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| err(format!("`{key}`: cannot parse `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(err(format!("`{key}`: expected true/false, got `{v}`"))),
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn opt(v: &str) -> Option<&str> {
    match v {
        "" | "none" => None,
        s => Some(s),
    }
}

fn delimiter(v: &str) -> Result<u8, ConfigError> {
    match v {
        "tab" | "\\t" => Ok(b'\t'),
        "comma" => Ok(b','),
        "semicolon" => Ok(b';'),
        s if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        s => Err(err(format!("`delimiter`: expected one ASCII character, got `{s}`"))),
    }
}

fn delimiter_name(d: u8) -> String {
    match d {
        b'\t' => "tab".into(),
        b',' => "comma".into(),
        b';' => "semicolon".into(),
        c => (c as char).to_string(),
    }
}

impl ExperimentConfig {
    /// Applies pairs in order over the defaults and validates the result.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        // the preset goes first so explicit keys override it
        if let Some((_, p)) = pairs.iter().rev().find(|(k, _)| k == "preset") {
            cfg.apply_preset(p)?;
        }
        let (mut date_col, mut time_col) = (None::<String>, None::<String>);
        let (mut date_fmt, mut time_fmt) = (String::from("%d/%m/%Y"), String::from("%H.%M.%S"));
        if let TimestampSource::DateTime {
            date,
            time,
            date_format,
            time_format,
        } = &cfg.load.timestamp
        {
            date_col = Some(date.clone());
            time_col = Some(time.clone());
            date_fmt = date_format.clone();
            time_fmt = time_format.clone();
        }
        for (key, v) in pairs {
            let v = v.as_str();
            match key.as_str() {
                "preset" => {}
                k if k.starts_with("manifest.") => {}
                "data" => cfg.data = opt(v).map(PathBuf::from),
                "delimiter" => cfg.load.delimiter = delimiter(v)?,
                "decimal_comma" => cfg.load.decimal_comma = flag(key, v)?,
                "sentinel" => cfg.load.sentinel = opt(v).map(|s| num(key, s)).transpose()?,
                "na_tokens" => {
                    cfg.load.na_tokens = LoadOptions::default().na_tokens;
                    cfg.load.na_tokens.extend(list(v));
                }
                "columns" => cfg.load.columns = opt(v).map(list),
                "complete_cases" => cfg.load.complete_cases = flag(key, v)?,
                "timestamp" => {
                    cfg.load.timestamp = match v {
                        "auto" => TimestampSource::Auto,
                        "none" | "" => TimestampSource::None,
                        c => TimestampSource::Column(c.to_string()),
                    };
                    date_col = None;
                    time_col = None;
                }
                "date_column" => date_col = opt(v).map(String::from),
                "time_column" => time_col = opt(v).map(String::from),
                "date_format" => date_fmt = v.to_string(),
                "time_format" => time_fmt = v.to_string(),
                "mechanism" => cfg.mechanism = v.parse().map_err(|e| err(format!("{e}")))?,
                "rate" => cfg.rate = num(key, v)?,
                "masked_vars" => cfg.masked_vars = opt(v).map(list).unwrap_or_default(),
                "methods" => cfg.methods = list(v),
                "sampler" => cfg.sampler = v.parse().map_err(|e| err(format!("{e}")))?,
                "mala_convention" => {
                    cfg.mala_convention = match v {
                        "as-printed" | "as_printed" | "sd" => MalaConvention::AsPrinted,
                        "variance" => MalaConvention::Variance,
                        o => return Err(err(format!("`mala_convention`: unknown `{o}`"))),
                    }
                }
                "lags" => {
                    cfg.lags = match v.split_once(':') {
                        Some((p, f)) => LagOrder {
                            past: num(key, p.trim())?,
                            future: num(key, f.trim())?,
                        },
                        None => LagOrder::symmetric(num(key, v)?),
                    }
                }
                "iters" => cfg.iters = num(key, v)?,
                "burn_in" => cfg.burn_in = num(key, v)?,
                "chains" => cfg.chains = num(key, v)?,
                "inner_draws" => cfg.inner_draws = num(key, v)?,
                "sweeps" => cfg.sweeps = num(key, v)?,
                "imputations" => cfg.imputations = num(key, v)?,
                "init" => {
                    let period = match cfg.init {
                        Initialization::TimeAware { period } => period,
                        Initialization::Mean => None,
                    };
                    cfg.init = match v {
                        "mean" => Initialization::Mean,
                        "time-aware" | "time_aware" => Initialization::TimeAware { period },
                        o => return Err(err(format!("`init`: unknown `{o}` (mean | time-aware)"))),
                    }
                }
                "time_features" => {
                    let features = opt(v)
                        .map(list)
                        .unwrap_or_default()
                        .iter()
                        .map(|f| f.parse::<TimeFeature>().map_err(|e| err(format!("{e}"))))
                        .collect::<Result<Vec<_>, _>>()?;
                    cfg.time_features = TimeFeatureSpec { features };
                }
                "theta_var" => cfg.prior.theta_var = num(key, v)?,
                "ig_shape" => cfg.prior.ig_shape = num(key, v)?,
                "ig_scale" => cfg.prior.ig_scale = num(key, v)?,
                "adapt" => cfg.adapt = flag(key, v)?,
                "initial_scale" => cfg.initial_scale = num(key, v)?,
                "knn_k" => cfg.knn_k = num(key, v)?,
                "seasonal_period" => cfg.seasonal_period = opt(v).map(|s| num(key, s)).transpose()?,
                "visit_order" => {
                    cfg.visit_order = match v {
                        "column" => VisitOrder::Column,
                        "ascending-missing" | "ascending_missing" => VisitOrder::AscendingMissing,
                        o => return Err(err(format!("`visit_order`: unknown `{o}`"))),
                    }
                }
                "runs" => cfg.runs = num(key, v)?,
                "seed" => cfg.seed = num(key, v)?,
                "out" => cfg.out = PathBuf::from(v),
                "workers" => cfg.workers = num(key, v)?,
                "truth" => cfg.truth = opt(v).map(PathBuf::from),
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        if let Initialization::TimeAware { period } = &mut cfg.init {
            *period = cfg.seasonal_period;
        }
        match (date_col, time_col) {
            (Some(date), Some(time)) => {
                cfg.load.timestamp = TimestampSource::DateTime {
                    date,
                    time,
                    date_format: date_fmt,
                    time_format: time_fmt,
                }
            }
            (None, None) => {}
            _ => return Err(err("`date_column` and `time_column` must be given together")),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_preset(&mut self, name: &str) -> Result<(), ConfigError> {
        match name {
            "airquality" => {
                self.preset = Some(name.into());
                self.load = LoadOptions {
                    delimiter: b';',
                    decimal_comma: true,
                    sentinel: Some(-200.0),
                    columns: Some(AIRQUALITY_COLUMNS.map(String::from).to_vec()),
                    timestamp: TimestampSource::DateTime {
                        date: "Date".into(),
                        time: "Time".into(),
                        date_format: "%d/%m/%Y".into(),
                        time_format: "%H.%M.%S".into(),
                    },
                    complete_cases: true,
                    ..LoadOptions::default()
                };
                Ok(())
            }
            "none" | "" => Ok(()),
            o => Err(err(format!("unknown preset `{o}` (airquality)"))),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(m) = self.methods.iter().find(|m| !METHODS.contains(&m.as_str())) {
            return Err(err(format!("unknown method `{m}` (expected one of {})", METHODS.join(", "))));
        }
        if self.runs == 0 {
            return Err(err("`runs` must be at least 1"));
        }
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(err(format!("`rate` must lie in (0, 1), got {}", self.rate)));
        }
        for (name, v) in [
            ("iters", self.iters),
            ("chains", self.chains),
            ("sweeps", self.sweeps),
            ("imputations", self.imputations),
            ("knn_k", self.knn_k),
            ("inner_draws", self.inner_draws),
        ] {
            if v == 0 {
                return Err(err(format!("`{name}` must be at least 1")));
            }
        }
        if self.iters < 10 || self.inner_draws < 10 {
            return Err(err("`iters` and `inner_draws` must be at least 10"));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(err("`burn_in` must lie in [0, 1)"));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(err("`initial_scale` must be positive"));
        }
        self.prior.validate().map_err(|e| err(e.to_string()))?;
        Ok(())
    }

    /// Method names with `tbayes` resolved through `sampler`, duplicates
    /// dropped.
    pub fn resolved_methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for m in &self.methods {
            let name = if m == "tbayes" {
                if self.sampler == SamplerKind::Mala {
                    "tbayes-mala".to_string()
                } else {
                    "tbayes-rwm".to_string()
                }
            } else {
                m.clone()
            };
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }

    /// Every key with its effective value, loadable by [`Self::from_pairs`].
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into());
        kv("data", path(&self.data));
        kv("delimiter", delimiter_name(self.load.delimiter));
        kv("decimal_comma", self.load.decimal_comma.to_string());
        kv("sentinel", self.load.sentinel.map(|v| v.to_string()).unwrap_or_else(|| "none".into()));
        let defaults = LoadOptions::default().na_tokens;
        let extra: Vec<&str> = self
            .load
            .na_tokens
            .iter()
            .filter(|t| !defaults.contains(t))
            .map(String::as_str)
            .collect();
        kv("na_tokens", extra.join(","));
        kv("columns", self.load.columns.as_ref().map(|c| c.join(",")).unwrap_or_else(|| "none".into()));
        kv("complete_cases", self.load.complete_cases.to_string());
        match &self.load.timestamp {
            TimestampSource::None => kv("timestamp", "none".into()),
            TimestampSource::Auto => kv("timestamp", "auto".into()),
            TimestampSource::Column(c) => kv("timestamp", c.clone()),
            TimestampSource::DateTime {
                date,
                time,
                date_format,
                time_format,
            } => {
                kv("date_column", date.clone());
                kv("time_column", time.clone());
                kv("date_format", date_format.clone());
                kv("time_format", time_format.clone());
            }
        }
        kv("mechanism", self.mechanism.to_string());
        kv("rate", self.rate.to_string());
        kv("masked_vars", self.masked_vars.join(","));
        kv("methods", self.methods.join(","));
        kv("sampler", self.sampler.name().into());
        kv(
            "mala_convention",
            match self.mala_convention {
                MalaConvention::AsPrinted => "as-printed",
                MalaConvention::Variance => "variance",
            }
            .into(),
        );
        kv("lags", format!("{}:{}", self.lags.past, self.lags.future));
        kv("iters", self.iters.to_string());
        kv("burn_in", self.burn_in.to_string());
        kv("chains", self.chains.to_string());
        kv("inner_draws", self.inner_draws.to_string());
        kv("sweeps", self.sweeps.to_string());
        kv("imputations", self.imputations.to_string());
        kv("init", self.init.name().into());
        let tf: Vec<&str> = self.time_features.features.iter().map(|f| f.name()).collect();
        kv("time_features", if tf.is_empty() { "none".into() } else { tf.join(",") });
        kv("theta_var", self.prior.theta_var.to_string());
        kv("ig_shape", self.prior.ig_shape.to_string());
        kv("ig_scale", self.prior.ig_scale.to_string());
        kv("adapt", self.adapt.to_string());
        kv("initial_scale", self.initial_scale.to_string());
        kv("knn_k", self.knn_k.to_string());
        kv("seasonal_period", self.seasonal_period.map(|p| p.to_string()).unwrap_or_else(|| "none".into()));
        kv(
            "visit_order",
            match self.visit_order {
                VisitOrder::Column => "column",
                VisitOrder::AscendingMissing => "ascending-missing",
            }
            .into(),
        );
        kv("runs", self.runs.to_string());
        kv("seed", self.seed.to_string());
        kv("out", self.out.display().to_string());
        kv("workers", self.workers.to_string());
        kv("truth", path(&self.truth));
        s
    }
}
