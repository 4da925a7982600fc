//! Error metrics over injected cells and their aggregation across runs.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::missingness::GroundTruthMask;

fn check(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            found: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty);
    }
    if pred.iter().chain(actual).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric input"));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual)?;
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(libm::sqrt(sse / pred.len() as f64))
}

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check(pred, actual)?;
    let sae: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum();
    Ok(sae / pred.len() as f64)
}

/// RMSE divided by the population standard deviation of `actual`.
pub fn nrmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    let r = rmse(pred, actual)?;
    let (_, sd) = crate::dataset::mean_and_population_sd(actual);
    if !(sd > 0.0) {
        return Err(Error::DegenerateMetric("nrmse: actual values are constant"));
    }
    Ok(r / sd)
}

/// MAE divided by the range of `actual`.
pub fn nmae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    let m = mae(pred, actual)?;
    let (lo, hi) = actual
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return Err(Error::DegenerateMetric("nmae: actual values have zero range"));
    }
    Ok(m / (hi - lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Rmse,
    Mae,
    Nrmse,
    Nmae,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Rmse, Metric::Mae, Metric::Nrmse, Metric::Nmae];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Mae => "mae",
            Metric::Nrmse => "nrmse",
            Metric::Nmae => "nmae",
        }
    }

    pub fn compute(self, pred: &[f64], actual: &[f64]) -> Result<f64> {
        match self {
            Metric::Rmse => rmse(pred, actual),
            Metric::Mae => mae(pred, actual),
            Metric::Nrmse => nrmse(pred, actual),
            Metric::Nmae => nmae(pred, actual),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One (variable, method, sampler, metric) cell with its across-run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub variable: String,
    pub method: String,
    pub sampler: String,
    pub metric: Metric,
    pub mean: f64,
    /// Sample standard deviation across runs; 0 for a single run.
    pub sd: f64,
    pub runs: usize,
}

impl MetricRow {
    fn same_key(&self, other: &MetricRow) -> bool {
        self.variable == other.variable
            && self.method == other.method
            && self.sampler == other.sampler
            && self.metric == other.metric
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
    /// Fingerprints of the ground-truth masks the rows were scored on.
    pub mask_fingerprints: Vec<u64>,
}

impl MetricsReport {
    pub fn get(&self, variable: &str, method: &str, metric: Metric) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.variable == variable && r.method == method && r.metric == metric)
    }

    /// Appends the rows of another report scored on the same mask(s).
    pub fn extend(&mut self, other: MetricsReport) {
        self.rows.extend(other.rows);
        for f in other.mask_fingerprints {
            if !self.mask_fingerprints.contains(&f) {
                self.mask_fingerprints.push(f);
            }
        }
    }
}

/// FNV-1a over the injected `(row, col)` pairs.
pub fn mask_fingerprint(truth: &GroundTruthMask) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for c in truth.cells() {
        for b in (c.row as u64).to_le_bytes().into_iter().chain((c.col as u64).to_le_bytes()) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Imputed and true values of column `col` over its injected cells only.
pub fn injected_pairs(imputed: &TimeSeriesDataset, truth: &GroundTruthMask, col: usize) -> (Vec<f64>, Vec<f64>) {
    truth
        .column_cells(col)
        .map(|c| (imputed.values()[(c.row, c.col)], c.value))
        .unzip()
}

/// Scores a completed dataset on the injected cells of every masked column.
pub fn score(
    imputed: &TimeSeriesDataset,
    truth: &GroundTruthMask,
    method: &str,
    sampler: &str,
) -> Result<MetricsReport> {
    if imputed.nrows() != truth.flags().nrows() || imputed.ncols() != truth.flags().ncols() {
        return Err(Error::DimensionMismatch {
            expected: truth.flags().nrows(),
            found: imputed.nrows(),
        });
    }
    let mut rows = Vec::new();
    for col in truth.columns() {
        if truth.cells().iter().any(|c| c.col == col && imputed.mask().is_missing(c.row, c.col)) {
            return Err(Error::InvalidDataset(alloc::format!(
                "column {col} still has missing injected cells"
            )));
        }
        let (pred, actual) = injected_pairs(imputed, truth, col);
        for metric in Metric::ALL {
            rows.push(MetricRow {
                variable: imputed.names()[col].clone(),
                method: String::from(method),
                sampler: String::from(sampler),
                metric,
                mean: metric.compute(&pred, &actual)?,
                sd: 0.0,
                runs: 1,
            });
        }
    }
    Ok(MetricsReport {
        rows,
        mask_fingerprints: alloc::vec![mask_fingerprint(truth)],
    })
}

/// Per-cell mean and sample standard deviation (divisor `R − 1`) of the run
/// values. Every report must list the same keys in the same order.
pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports.first().ok_or(Error::Empty)?;
    for r in reports {
        if r.rows.len() != first.rows.len() || r.rows.iter().zip(&first.rows).any(|(a, b)| !a.same_key(b)) {
            return Err(Error::InconsistentReports);
        }
    }
    let n = reports.len() as f64;
    let rows = first
        .rows
        .iter()
        .enumerate()
        .map(|(i, key)| {
            let mut values: Vec<f64> = reports.iter().map(|r| r.rows[i].mean).collect();
            // summation order must not depend on run order
            values.sort_by(f64::total_cmp);
            let mean = values.iter().sum::<f64>() / n;
            let sd = if reports.len() > 1 {
                libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
            } else {
                0.0
            };
            MetricRow {
                mean,
                sd,
                runs: reports.len(),
                ..key.clone()
            }
        })
        .collect();
    let mut fingerprints: Vec<u64> = reports.iter().flat_map(|r| r.mask_fingerprints.iter().copied()).collect();
    fingerprints.sort_unstable();
    fingerprints.dedup();
    Ok(MetricsReport {
        rows,
        mask_fingerprints: fingerprints,
    })
}
