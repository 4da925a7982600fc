//! Method registry: maps CLI names to the core engines and runs the `m`
//! imputations of the multiple-imputation methods in parallel.

use anyhow::{Context, Result};
use rayon::prelude::*;
use tbmice_core::baselines::Baseline;
use tbmice_core::imputation::{config_hash, ImputationResult, Prepared};
use tbmice_core::mice_classic::{self, MiceConfig};
use tbmice_core::samplers::SamplerKind;
use tbmice_core::tbayes::{self, TbmConfig};
use tbmice_core::TimeSeriesDataset;

use crate::config::{ConfigError, ExperimentConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Baseline(Baseline),
    Mice(MiceConfig),
    Tbayes(TbmConfig),
}

impl Method {
    /// Resolves a registered name against the configuration. `seed` is the
    /// base seed of this invocation (the per-run seed in a benchmark).
    pub fn from_name(name: &str, cfg: &ExperimentConfig, seed: u64) -> Result<Self, ConfigError> {
        let mice = || MiceConfig {
            sweeps: cfg.sweeps,
            imputations: cfg.imputations,
            lags: cfg.lags,
            init: cfg.init,
            visit_order: cfg.visit_order,
            time_features: cfg.time_features.clone(),
            seed,
        };
        let tbayes = |sampler: SamplerKind| TbmConfig {
            sampler,
            mala_convention: cfg.mala_convention,
            chains: cfg.chains,
            iterations: cfg.iters,
            burn_in: cfg.burn_in,
            inner_draws: cfg.inner_draws,
            sweeps: cfg.sweeps,
            imputations: cfg.imputations,
            lags: cfg.lags,
            init: cfg.init,
            time_features: cfg.time_features.clone(),
            prior: cfg.prior,
            adapt: cfg.adapt,
            initial_scale: cfg.initial_scale,
            seed,
            keep_chains: false,
        };
        Ok(match name {
            "linear" => Method::Baseline(Baseline::Linear),
            "locf" => Method::Baseline(Baseline::Locf),
            "mean" => Method::Baseline(Baseline::Mean),
            "median" => Method::Baseline(Baseline::Median),
            "knn" => Method::Baseline(Baseline::Knn { k: cfg.knn_k }),
            "seasonal" => Method::Baseline(Baseline::Seasonal {
                period: cfg.seasonal_period,
            }),
            "mice" => Method::Mice(mice()),
            "tbayes-rwm" => Method::Tbayes(tbayes(match cfg.sampler {
                SamplerKind::Mala => SamplerKind::RwmEmpirical,
                rwm => rwm,
            })),
            "tbayes-mala" => Method::Tbayes(tbayes(SamplerKind::Mala)),
            "tbayes" => Method::Tbayes(tbayes(cfg.sampler)),
            other => return Err(ConfigError(format!("unknown method `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Baseline(b) => b.name(),
            Method::Mice(_) => "mice",
            Method::Tbayes(c) => c.method_name(),
        }
    }

    pub fn sampler(&self) -> &'static str {
        match self {
            Method::Tbayes(c) => c.sampler.name(),
            _ => "-",
        }
    }

    pub fn is_tbayes(&self) -> bool {
        matches!(self, Method::Tbayes(_))
    }

    /// Runs the method. Baselines yield one imputation with zero predictive
    /// variance; the chained-equation methods yield `m`, computed in parallel.
    pub fn run(&self, ds: &TimeSeriesDataset) -> Result<ImputationResult> {
        let ctx = || format!("method {}", self.name());
        match self {
            Method::Baseline(b) => baseline_result(*b, ds).with_context(ctx),
            Method::Mice(cfg) => {
                cfg.validate().with_context(ctx)?;
                let prep = Prepared::new(ds, &cfg.time_features).with_context(ctx)?;
                let seeds: Vec<u64> = (1..=cfg.imputations).map(|r| cfg.imputation_seed(r)).collect();
                if prep.is_complete() {
                    return Ok(ImputationResult::passthrough(&prep, "mice", "-", cfg.hash(), seeds)?);
                }
                let runs = (1..=cfg.imputations)
                    .into_par_iter()
                    .map(|r| mice_classic::impute_once(&prep, cfg, r, None))
                    .collect::<Result<Vec<_>, _>>()
                    .with_context(ctx)?;
                Ok(ImputationResult::assemble(&prep, "mice", "-", cfg.hash(), runs)?)
            }
            Method::Tbayes(cfg) => {
                cfg.validate().with_context(ctx)?;
                let prep = Prepared::new(ds, &cfg.time_features).with_context(ctx)?;
                let (name, sampler) = (cfg.method_name(), cfg.sampler.name());
                let seeds: Vec<u64> = (1..=cfg.imputations).map(|r| cfg.imputation_seed(r)).collect();
                if prep.is_complete() {
                    return Ok(ImputationResult::passthrough(&prep, name, sampler, cfg.hash(), seeds)?);
                }
                let runs = (1..=cfg.imputations)
                    .into_par_iter()
                    .map(|r| tbayes::impute_once(&prep, cfg, r))
                    .collect::<Result<Vec<_>, _>>()
                    .with_context(ctx)?;
                Ok(ImputationResult::assemble(&prep, name, sampler, cfg.hash(), runs)?)
            }
        }
    }
}

fn baseline_result(b: Baseline, ds: &TimeSeriesDataset) -> Result<ImputationResult> {
    let completed = b.impute(ds)?;
    let cells: Vec<(usize, usize)> = ds
        .mask()
        .missing_columns()
        .into_iter()
        .flat_map(|j| ds.mask().missing_rows(j).into_iter().map(move |t| (t, j)))
        .collect();
    let mean: Vec<f64> = cells.iter().map(|&(t, j)| completed.values()[(t, j)]).collect();
    Ok(ImputationResult {
        method: b.name().into(),
        sampler: "-".into(),
        cells: cells.clone(),
        predictive_var: vec![vec![0.0; mean.len()]],
        predictive_mean: vec![mean],
        imputations: vec![completed],
        seeds: vec![0],
        config_hash: config_hash(&format!("{b:?}")),
        chains: vec![],
    })
}
