//! Classical single-imputation baselines. Every function returns a fully
//! observed dataset and leaves observed cells bit-identical.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dataset::TimeSeriesDataset;
use crate::design::{column_series, initialize_mean, initialize_time_aware, linear_fill};
use crate::error::{Error, Result};

/// Baseline method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Linear,
    Locf,
    Mean,
    Median,
    Knn { k: usize },
    Seasonal { period: Option<usize> },
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Linear => "linear",
            Baseline::Locf => "locf",
            Baseline::Mean => "mean",
            Baseline::Median => "median",
            Baseline::Knn { .. } => "knn",
            Baseline::Seasonal { .. } => "seasonal",
        }
    }

    pub fn impute(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        match *self {
            Baseline::Linear => impute_linear(ds),
            Baseline::Locf => impute_locf(ds),
            Baseline::Mean => impute_mean(ds),
            Baseline::Median => impute_median(ds),
            Baseline::Knn { k } => impute_knn(ds, k),
            Baseline::Seasonal { period } => impute_seasonal(ds, period),
        }
    }
}

fn per_column(
    ds: &TimeSeriesDataset,
    fill: impl Fn(&[Option<f64>]) -> Option<Vec<f64>>,
) -> Result<TimeSeriesDataset> {
    let mut x = ds.values().clone();
    for j in 0..ds.ncols() {
        if ds.mask().missing_count(j) == 0 {
            continue;
        }
        let series = column_series(ds, j);
        let filled = fill(&series).ok_or(Error::FullyMissingColumn { column: j })?;
        for t in ds.mask().missing_rows(j) {
            x[(t, j)] = filled[t];
        }
    }
    ds.with_completed(x)
}

pub fn impute_linear(ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    per_column(ds, linear_fill)
}

/// Last observation carried forward; a leading gap takes the first observed
/// value.
pub fn impute_locf(ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    per_column(ds, |series| {
        let first = series.iter().find_map(|v| *v)?;
        let mut last = first;
        Some(
            series
                .iter()
                .map(|v| {
                    if let Some(v) = v {
                        last = *v;
                    }
                    last
                })
                .collect(),
        )
    })
}

pub fn impute_mean(ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    ds.with_completed(initialize_mean(ds)?)
}

/// Median of the observed values, averaging the two central order statistics
/// for an even count.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

pub fn impute_median(ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    per_column(ds, |series| {
        let obs: Vec<f64> = series.iter().filter_map(|v| *v).collect();
        let m = median(&obs)?;
        Some(series.iter().map(|v| v.unwrap_or(m)).collect())
    })
}

/// Distance between rows `a` and `b` over columns observed in both (the
/// target column excluded), divided by the square root of the shared count.
/// Rows sharing no column are infinitely far apart.
pub fn row_distance(ds: &TimeSeriesDataset, a: usize, b: usize, skip: usize) -> f64 {
    let mask = ds.mask();
    let mut sum = 0.0;
    let mut shared = 0usize;
    for c in (0..ds.ncols()).filter(|&c| c != skip) {
        if !mask.is_missing(a, c) && !mask.is_missing(b, c) {
            let d = ds.values()[(a, c)] - ds.values()[(b, c)];
            sum += d * d;
            shared += 1;
        }
    }
    if shared == 0 {
        f64::INFINITY
    } else {
        libm::sqrt(sum / shared as f64)
    }
}

/// K-nearest-neighbour imputation: each missing cell `(t, j)` takes the mean of
/// column `j` over the `k` nearest donor rows that observe `j`. Ties go to the
/// lower row index; fewer than `k` donors means all donors are used.
pub fn impute_knn(ds: &TimeSeriesDataset, k: usize) -> Result<TimeSeriesDataset> {
    if k == 0 {
        return Err(crate::error::invalid("k", "must be at least 1"));
    }
    let mut x: DMatrix<f64> = ds.values().clone();
    for j in 0..ds.ncols() {
        let missing = ds.mask().missing_rows(j);
        if missing.is_empty() {
            continue;
        }
        let donors = ds.mask().observed_rows(j);
        if donors.is_empty() {
            return Err(Error::NoDonor { column: j });
        }
        let mut ranked: Vec<(f64, usize)> = Vec::with_capacity(donors.len());
        for &t in &missing {
            ranked.clear();
            ranked.extend(donors.iter().map(|&r| (row_distance(ds, t, r, j), r)));
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let take = k.min(ranked.len());
            let sum: f64 = ranked[..take].iter().map(|&(_, r)| ds.values()[(r, j)]).sum();
            x[(t, j)] = sum / take as f64;
        }
    }
    ds.with_completed(x)
}

/// Seasonal decomposition fill; reduces to linear interpolation when no period
/// is supplied or detected.
pub fn impute_seasonal(ds: &TimeSeriesDataset, period: Option<usize>) -> Result<TimeSeriesDataset> {
    if let Some(p) = period {
        if p < 2 {
            return Err(crate::error::invalid("period", "must be at least 2"));
        }
        if ds.nrows() < 2 * p {
            return Err(Error::SeriesTooShort {
                len: ds.nrows(),
                required: 2 * p,
            });
        }
    }
    ds.with_completed(initialize_time_aware(ds, period)?)
}
