//! Lagged design matrices and placeholder initialization.
//!
//! Row `t` of a [`LaggedDesign`] for target column `j` is
//!
//! ```text
//! [1, X[t, -j], h_t, X[t-1, j] .. X[t-ℓp, j], X[t+1, j] .. X[t+ℓf, j]]
//! ```
//!
//! built from a placeholder-completed matrix. Lags that fall outside the
//! series are clamped to the nearest in-range index other than `t`, so a row
//! never contains the target cell it predicts.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dataset::{mean_and_population_sd, TimeSeriesDataset};
use crate::error::{Error, Result};

/// Time-derived covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeFeature {
    HourOfDay,
    DayOfWeek,
    LinearIndex,
}

impl core::str::FromStr for TimeFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hour" | "hour-of-day" => Ok(Self::HourOfDay),
            "dow" | "day-of-week" => Ok(Self::DayOfWeek),
            "index" | "linear-index" => Ok(Self::LinearIndex),
            other => Err(crate::error::invalid(
                "time_feature",
                format!("unknown `{other}`"),
            )),
        }
    }
}

impl TimeFeature {
    pub fn name(self) -> &'static str {
        match self {
            Self::HourOfDay => "hour-of-day",
            Self::DayOfWeek => "day-of-week",
            Self::LinearIndex => "linear-index",
        }
    }

    /// Raw value at row `t`. Without timestamps rows are taken as hourly
    /// steps from index 0.
    fn raw(self, t: usize, timestamps: Option<&[i64]>) -> f64 {
        let secs = match timestamps {
            Some(ts) => ts[t],
            None => t as i64 * 3600,
        };
        match self {
            Self::HourOfDay => (secs.rem_euclid(86_400) / 3600) as f64,
            // 1970-01-01 was a Thursday; Monday = 0
            Self::DayOfWeek => ((secs.div_euclid(86_400) + 3).rem_euclid(7)) as f64,
            Self::LinearIndex => t as f64,
        }
    }
}

/// Enabled time features; empty by default.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimeFeatureSpec {
    pub features: Vec<TimeFeature>,
}

impl TimeFeatureSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Standardized `n × k` feature matrix. Constant features become zeros.
    pub fn matrix(&self, n: usize, timestamps: Option<&[i64]>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, self.features.len());
        for (k, f) in self.features.iter().enumerate() {
            let raw: Vec<f64> = (0..n).map(|t| f.raw(t, timestamps)).collect();
            let (mean, sd) = mean_and_population_sd(&raw);
            for t in 0..n {
                m[(t, k)] = if sd > 0.0 { (raw[t] - mean) / sd } else { 0.0 };
            }
        }
        m
    }
}

/// Past and future lag counts of the target column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagOrder {
    pub past: usize,
    pub future: usize,
}

impl LagOrder {
    pub fn symmetric(lag: usize) -> Self {
        Self {
            past: lag,
            future: lag,
        }
    }

    pub fn total(self) -> usize {
        self.past + self.future
    }
}

/// Design matrix `Z_{·,-j}` for one target column, one row per time index.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDesign {
    pub target: usize,
    pub lags: LagOrder,
    pub n_time_features: usize,
    rows: DMatrix<f64>,
}

impl LaggedDesign {
    /// Number of predictors including the bias.
    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.rows.row(t).iter().copied().collect()
    }

    /// Copies the selected rows into a dense `|rows| × d` matrix.
    pub fn select_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.dim(), |i, k| self.rows[(rows[i], k)])
    }

    /// Human-readable predictor labels, aligned with the columns.
    pub fn labels(&self, names: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        out.push(String::from("bias"));
        for (c, name) in names.iter().enumerate() {
            if c != self.target {
                out.push(name.clone());
            }
        }
        for k in 0..self.n_time_features {
            out.push(format!("time{}", k + 1));
        }
        let target = &names[self.target];
        for k in 1..=self.lags.past {
            out.push(format!("{target}[t-{k}]"));
        }
        for k in 1..=self.lags.future {
            out.push(format!("{target}[t+{k}]"));
        }
        out
    }
}

/// Design dimension `1 + (p-1) + k + ℓp + ℓf`.
pub fn design_dim(p: usize, n_time_features: usize, lags: LagOrder) -> usize {
    1 + (p - 1) + n_time_features + lags.total()
}

/// Index used for the lag at `t + offset` (offset ≠ 0).
#[inline]
fn lag_index(t: usize, offset: isize, n: usize) -> usize {
    let raw = t as isize + offset;
    let clamped = raw.clamp(0, n as isize - 1) as usize;
    if clamped != t {
        clamped
    } else if offset < 0 {
        t + 1
    } else {
        t - 1
    }
}

/// Builds `Z_{t,-j}` for every `t` from a complete matrix. `time_features` is
/// the `n × k` matrix from [`TimeFeatureSpec::matrix`] (may have zero
/// columns).
pub fn build_lagged_design(
    x: &DMatrix<f64>,
    target: usize,
    lags: LagOrder,
    time_features: &DMatrix<f64>,
) -> Result<LaggedDesign> {
    let (n, p) = x.shape();
    if target >= p {
        return Err(Error::ColumnOutOfRange {
            column: target,
            columns: p,
        });
    }
    if n <= lags.total() {
        return Err(Error::SeriesTooShort {
            len: n,
            required: lags.total() + 1,
        });
    }
    if p == 1 && lags.total() == 0 {
        return Err(crate::error::invalid(
            "lags",
            "a univariate series needs at least one lag",
        ));
    }
    if time_features.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: time_features.nrows(),
        });
    }
    let k = time_features.ncols();
    let d = design_dim(p, k, lags);
    let mut rows = DMatrix::zeros(n, d);
    for t in 0..n {
        rows[(t, 0)] = 1.0;
    }
    let mut col = 1;
    for c in (0..p).filter(|&c| c != target) {
        rows.column_mut(col).copy_from(&x.column(c));
        col += 1;
    }
    for f in 0..k {
        rows.column_mut(col).copy_from(&time_features.column(f));
        col += 1;
    }
    for lag in 1..=lags.past {
        for t in 0..n {
            rows[(t, col)] = x[(lag_index(t, -(lag as isize), n), target)];
        }
        col += 1;
    }
    for lag in 1..=lags.future {
        for t in 0..n {
            rows[(t, col)] = x[(lag_index(t, lag as isize, n), target)];
        }
        col += 1;
    }
    debug_assert_eq!(col, d);
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    Ok(LaggedDesign {
        target,
        lags,
        n_time_features: k,
        rows,
    })
}

/// Step-1 placeholder strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Initialization {
    #[default]
    Mean,
    /// Interpolation plus optional seasonal correction; `period` forces the
    /// seasonal period instead of detecting it.
    TimeAware { period: Option<usize> },
}

impl Initialization {
    pub fn apply(self, ds: &TimeSeriesDataset) -> Result<DMatrix<f64>> {
        match self {
            Self::Mean => initialize_mean(ds),
            Self::TimeAware { period } => initialize_time_aware(ds, period),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::TimeAware { .. } => "time-aware",
        }
    }
}

/// Missing cells replaced by their column's observed mean.
pub fn initialize_mean(ds: &TimeSeriesDataset) -> Result<DMatrix<f64>> {
    let mut x = ds.values().clone();
    for j in 0..ds.ncols() {
        let miss = ds.mask().missing_rows(j);
        if miss.is_empty() {
            continue;
        }
        let obs = ds.observed_values(j);
        if obs.is_empty() {
            return Err(Error::FullyMissingColumn { column: j });
        }
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        for t in miss {
            x[(t, j)] = mean;
        }
    }
    Ok(x)
}

/// Linear interpolation between nearest observed neighbours; edge gaps take
/// the nearest observed value. `None` marks missing.
pub fn linear_fill(series: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<(usize, f64)> = series
        .iter()
        .enumerate()
        .filter_map(|(t, v)| v.map(|v| (t, v)))
        .collect();
    let (&(first_t, first_v), &(last_t, last_v)) = (known.first()?, known.last()?);
    let mut out = vec![0.0; series.len()];
    for slot in out.iter_mut().take(first_t) {
        *slot = first_v;
    }
    for w in known.windows(2) {
        let ((t0, v0), (t1, v1)) = (w[0], w[1]);
        for (t, slot) in out.iter_mut().enumerate().take(t1).skip(t0) {
            let frac = (t - t0) as f64 / (t1 - t0) as f64;
            *slot = v0 + frac * (v1 - v0);
        }
    }
    out[last_t] = last_v;
    for slot in out.iter_mut().skip(last_t + 1) {
        *slot = last_v;
    }
    for &(t, v) in &known {
        out[t] = v;
    }
    Some(out)
}

pub(crate) fn column_series(ds: &TimeSeriesDataset, j: usize) -> Vec<Option<f64>> {
    (0..ds.nrows()).map(|t| ds.get(t, j)).collect()
}

/// Minimum autocorrelation for a lag to count as a seasonal period.
pub const SEASONAL_ACF_THRESHOLD: f64 = 0.3;
const MAX_PERIOD: usize = 500;
const PEAK_TOLERANCE: f64 = 0.05;

/// Detects a seasonal period as the strongest local autocorrelation peak at
/// lag ≥ 2 with value ≥ 0.3 (the shortest such lag within 0.05 of the
/// strongest peak), computed over observed pairs after removing a
/// least-squares linear trend. Only lags with `2·lag ≤ n` are considered.
pub fn detect_period(series: &[Option<f64>]) -> Option<usize> {
    let n = series.len();
    let obs: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .filter_map(|(t, v)| v.map(|v| (t as f64, v)))
        .collect();
    if obs.len() < 6 {
        return None;
    }
    // linear detrend
    let m = obs.len() as f64;
    let (mt, mv) = obs
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, v)| (a + t / m, b + v / m));
    let (sxy, sxx) = obs.iter().fold((0.0, 0.0), |(a, b), (t, v)| {
        (a + (t - mt) * (v - mv), b + (t - mt) * (t - mt))
    });
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let resid: Vec<Option<f64>> = series
        .iter()
        .enumerate()
        .map(|(t, v)| v.map(|v| v - mv - slope * (t as f64 - mt)))
        .collect();
    let var = obs
        .iter()
        .map(|(t, v)| {
            let r = v - mv - slope * (t - mt);
            r * r
        })
        .sum::<f64>()
        / m;
    if var <= 1e-300 {
        return None;
    }
    let max_lag = (n / 2).min(MAX_PERIOD);
    if max_lag < 2 {
        return None;
    }
    let acf: Vec<f64> = (0..=max_lag + 1)
        .map(|lag| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for t in 0..n.saturating_sub(lag) {
                if let (Some(a), Some(b)) = (resid[t], resid[t + lag]) {
                    sum += a * b;
                    count += 1;
                }
            }
            if count < 2 {
                0.0
            } else {
                sum / count as f64 / var
            }
        })
        .collect();
    let peaks: Vec<(usize, f64)> = (2..=max_lag)
        .filter(|&lag| {
            let r = acf[lag];
            r >= SEASONAL_ACF_THRESHOLD && r > acf[lag - 1] && r >= acf[lag + 1]
        })
        .map(|lag| (lag, acf[lag]))
        .collect();
    let top = peaks.iter().map(|&(_, r)| r).fold(f64::NEG_INFINITY, f64::max);
    // multiples of the fundamental period peak too; prefer the shortest lag
    // that is essentially as strong as the best one
    peaks
        .iter()
        .find(|&&(_, r)| r >= top - PEAK_TOLERANCE)
        .map(|&(lag, _)| lag)
}

/// Trend (full-period moving average) plus per-phase seasonal deviation,
/// iterated from the linear fill to a fixed point. Observed cells are kept.
pub fn seasonal_fill(series: &[Option<f64>], period: usize) -> Option<Vec<f64>> {
    let n = series.len();
    let mut filled = linear_fill(series)?;
    if period < 2 || n < 2 * period {
        return Some(filled);
    }
    let missing: Vec<usize> = (0..n).filter(|&t| series[t].is_none()).collect();
    if missing.is_empty() {
        return Some(filled);
    }
    let half = period / 2;
    let mut trend = vec![0.0; n];
    let mut prefix = vec![0.0; n + 1];
    for _ in 0..500 {
        for t in 0..n {
            prefix[t + 1] = prefix[t] + filled[t];
        }
        for (t, tr) in trend.iter_mut().enumerate() {
            let start = t.saturating_sub(half).min(n - period);
            *tr = (prefix[start + period] - prefix[start]) / period as f64;
        }
        let mut dev_sum = vec![0.0; period];
        let mut dev_cnt = vec![0usize; period];
        for (t, v) in series.iter().enumerate() {
            if let Some(v) = v {
                dev_sum[t % period] += v - trend[t];
                dev_cnt[t % period] += 1;
            }
        }
        let mut change: f64 = 0.0;
        for &t in &missing {
            let phase = t % period;
            let dev = if dev_cnt[phase] > 0 {
                dev_sum[phase] / dev_cnt[phase] as f64
            } else {
                0.0
            };
            let new = trend[t] + dev;
            change = change.max((new - filled[t]).abs());
            filled[t] = new;
        }
        if change < 1e-13 {
            break;
        }
    }
    Some(filled)
}

/// Per column: seasonal reconstruction when a period is supplied or detected,
/// linear interpolation otherwise.
pub fn initialize_time_aware(
    ds: &TimeSeriesDataset,
    period_hint: Option<usize>,
) -> Result<DMatrix<f64>> {
    let n = ds.nrows();
    if n < 3 {
        return Err(Error::SeriesTooShort { len: n, required: 3 });
    }
    let mut x = ds.values().clone();
    for j in 0..ds.ncols() {
        if ds.mask().missing_count(j) == 0 {
            continue;
        }
        let series = column_series(ds, j);
        let period = period_hint.or_else(|| detect_period(&series));
        let filled = match period {
            Some(p) => seasonal_fill(&series, p),
            None => linear_fill(&series),
        }
        .ok_or(Error::FullyMissingColumn { column: j })?;
        for (t, v) in filled.into_iter().enumerate() {
            x[(t, j)] = v;
        }
    }
    Ok(x)
}
