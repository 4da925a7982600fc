//! Shared plumbing for the multiple-imputation engines: preparation on the
//! standardized scale, the result type, and Rubin pooling.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dataset::{standardize, StandardizationParams, TimeSeriesDataset};
use crate::design::TimeFeatureSpec;
use crate::error::{invalid, Error, Result};
use crate::samplers::PosteriorDraws;

/// A dataset readied for imputation: standardized copy, time features and the
/// list of originally missing cells.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub original: TimeSeriesDataset,
    pub standardized: TimeSeriesDataset,
    pub params: StandardizationParams,
    pub time_features: DMatrix<f64>,
    /// Columns with at least one missing cell, in column order.
    pub missing_cols: Vec<usize>,
    /// Missing cells, column-major.
    pub cells: Vec<(usize, usize)>,
}

impl Prepared {
    pub fn new(ds: &TimeSeriesDataset, time_features: &TimeFeatureSpec) -> Result<Self> {
        for j in 0..ds.ncols() {
            if ds.mask().missing_count(j) == ds.nrows() {
                return Err(Error::FullyMissingColumn { column: j });
            }
        }
        let (standardized, params) = standardize(ds)?;
        let missing_cols = ds.mask().missing_columns();
        let cells = missing_cols
            .iter()
            .flat_map(|&j| ds.mask().missing_rows(j).into_iter().map(move |t| (t, j)))
            .collect();
        Ok(Self {
            original: ds.clone(),
            standardized,
            params,
            time_features: time_features.matrix(ds.nrows(), ds.timestamps()),
            missing_cols,
            cells,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Final-sweep chains of one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableChains {
    pub column: usize,
    /// Predictor labels aligned with θ.
    pub labels: Vec<String>,
    pub chains: Vec<PosteriorDraws>,
}

/// Output of one imputation run, all in native units.
#[derive(Debug, Clone)]
pub struct SingleImputation {
    pub completed: DMatrix<f64>,
    /// Per missing cell (same order as [`Prepared::cells`]).
    pub predictive_mean: Vec<f64>,
    pub predictive_var: Vec<f64>,
    pub seed: u64,
    pub chains: Vec<VariableChains>,
}

/// `m` completed datasets plus the per-cell predictive moments needed for
/// pooling.
#[derive(Debug, Clone)]
pub struct ImputationResult {
    pub method: String,
    pub sampler: String,
    pub imputations: Vec<TimeSeriesDataset>,
    /// Originally missing cells `(row, col)`, column-major.
    pub cells: Vec<(usize, usize)>,
    /// `[imputation][cell]` predictive mean and variance.
    pub predictive_mean: Vec<Vec<f64>>,
    pub predictive_var: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
    pub config_hash: u64,
    /// Final-sweep chains per imputation (empty unless requested).
    pub chains: Vec<Vec<VariableChains>>,
}

impl ImputationResult {
    pub fn m(&self) -> usize {
        self.imputations.len()
    }

    /// Builds the result from per-imputation outputs.
    pub fn assemble(
        prep: &Prepared,
        method: &str,
        sampler: &str,
        config_hash: u64,
        runs: Vec<SingleImputation>,
    ) -> Result<Self> {
        if runs.is_empty() {
            return Err(invalid("m", "need at least one imputation"));
        }
        let mut out = Self {
            method: String::from(method),
            sampler: String::from(sampler),
            imputations: Vec::with_capacity(runs.len()),
            cells: prep.cells.clone(),
            predictive_mean: Vec::with_capacity(runs.len()),
            predictive_var: Vec::with_capacity(runs.len()),
            seeds: Vec::with_capacity(runs.len()),
            config_hash,
            chains: Vec::with_capacity(runs.len()),
        };
        for run in runs {
            if run.predictive_mean.len() != prep.cells.len() || run.predictive_var.len() != prep.cells.len() {
                return Err(Error::DimensionMismatch {
                    expected: prep.cells.len(),
                    found: run.predictive_mean.len(),
                });
            }
            let mut completed = run.completed;
            // observed cells pass through bit-identical
            for j in 0..prep.original.ncols() {
                for t in 0..prep.original.nrows() {
                    if !prep.original.mask().is_missing(t, j) {
                        completed[(t, j)] = prep.original.values()[(t, j)];
                    }
                }
            }
            out.imputations.push(prep.original.with_completed(completed)?);
            out.predictive_mean.push(run.predictive_mean);
            out.predictive_var.push(run.predictive_var);
            out.seeds.push(run.seed);
            out.chains.push(run.chains);
        }
        Ok(out)
    }

    /// `m` copies of an already complete dataset.
    pub fn passthrough(prep: &Prepared, method: &str, sampler: &str, config_hash: u64, seeds: Vec<u64>) -> Result<Self> {
        let runs = seeds
            .into_iter()
            .map(|seed| SingleImputation {
                completed: prep.original.values().clone(),
                predictive_mean: Vec::new(),
                predictive_var: Vec::new(),
                seed,
                chains: Vec::new(),
            })
            .collect();
        Self::assemble(prep, method, sampler, config_hash, runs)
    }
}

/// Pooled value and Rubin variance components of one missing cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledCell {
    pub row: usize,
    pub col: usize,
    /// Mean of the `m` imputed values.
    pub value: f64,
    /// Mean of the per-imputation predictive means.
    pub predictive_mean: f64,
    /// `√T`.
    pub predictive_sd: f64,
    /// Mean within-imputation (predictive) variance.
    pub within: f64,
    /// Sample variance of the imputed values across imputations (0 if m = 1).
    pub between: f64,
    /// `W + (1 + 1/m)·B`.
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct Pooled {
    pub dataset: TimeSeriesDataset,
    pub cells: Vec<PooledCell>,
}

/// Rubin pooling over the `m` imputations.
pub fn pool_imputations(result: &ImputationResult) -> Result<Pooled> {
    let first = result.imputations.first().ok_or(Error::Empty)?;
    let m = result.m() as f64;
    let mut values = first.values().clone();
    let mut cells = Vec::with_capacity(result.cells.len());
    for (i, &(row, col)) in result.cells.iter().enumerate() {
        let draws: Vec<f64> = result.imputations.iter().map(|d| d.values()[(row, col)]).collect();
        let value = draws.iter().sum::<f64>() / m;
        let between = if draws.len() > 1 {
            draws.iter().map(|v| (v - value) * (v - value)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        let within = result.predictive_var.iter().map(|v| v[i]).sum::<f64>() / m;
        let predictive_mean = result.predictive_mean.iter().map(|v| v[i]).sum::<f64>() / m;
        let total = within + (1.0 + 1.0 / m) * between;
        values[(row, col)] = value;
        cells.push(PooledCell {
            row,
            col,
            value,
            predictive_mean,
            predictive_sd: libm::sqrt(total),
            within,
            between,
            total,
        });
    }
    Ok(Pooled {
        dataset: first.with_completed(values)?,
        cells,
    })
}

/// FNV-1a hash of a configuration's debug rendering.
pub fn config_hash(rendered: &str) -> u64 {
    rendered.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}
