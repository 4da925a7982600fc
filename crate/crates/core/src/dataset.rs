//! Multivariate time-series container with an explicit missingness mask.
//!
//! Values are stored column-major in an `n × p` [`DMatrix`]. Missing cells hold
//! `NaN` in the value matrix and are flagged in the [`MissingnessMask`]; the
//! mask is the source of truth.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `n × p` missingness flags, `true` meaning missing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingnessMask {
    rows: usize,
    cols: usize,
    // column-major, like the value matrix
    flags: Vec<bool>,
}

impl MissingnessMask {
    pub fn all_observed(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            flags: alloc::vec![false; rows * cols],
        }
    }

    /// Builds a mask from the non-finite cells of `values`.
    pub fn from_non_finite(values: &DMatrix<f64>) -> Self {
        Self {
            rows: values.nrows(),
            cols: values.ncols(),
            flags: values.iter().map(|v| !v.is_finite()).collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.flags[col * self.rows + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, missing: bool) {
        self.flags[col * self.rows + row] = missing;
    }

    fn column(&self, col: usize) -> &[bool] {
        &self.flags[col * self.rows..(col + 1) * self.rows]
    }

    /// `I_obs(j)`: rows where column `col` is observed, ascending.
    pub fn observed_rows(&self, col: usize) -> Vec<usize> {
        self.column(col)
            .iter()
            .enumerate()
            .filter_map(|(t, &m)| (!m).then_some(t))
            .collect()
    }

    /// `I_miss(j)`: rows where column `col` is missing, ascending.
    pub fn missing_rows(&self, col: usize) -> Vec<usize> {
        self.column(col)
            .iter()
            .enumerate()
            .filter_map(|(t, &m)| m.then_some(t))
            .collect()
    }

    pub fn missing_count(&self, col: usize) -> usize {
        self.column(col).iter().filter(|&&m| m).count()
    }

    /// `J_miss`: columns with at least one missing cell, ascending.
    pub fn missing_columns(&self) -> Vec<usize> {
        (0..self.cols)
            .filter(|&j| self.column(j).iter().any(|&m| m))
            .collect()
    }

    pub fn total_missing(&self) -> usize {
        self.flags.iter().filter(|&&m| m).count()
    }

    pub fn row_missing_count(&self, row: usize) -> usize {
        (0..self.cols).filter(|&j| self.is_missing(row, j)).count()
    }
}

/// An `n × p` numeric time series with optional timestamps (seconds since the
/// Unix epoch, or plain integer indices).
#[derive(Debug, Clone)]
pub struct TimeSeriesDataset {
    values: DMatrix<f64>,
    timestamps: Option<Vec<i64>>,
    names: Vec<String>,
    mask: MissingnessMask,
}

impl TimeSeriesDataset {
    /// Validates and assembles a dataset. Cells flagged missing are overwritten
    /// with `NaN`.
    pub fn new(
        mut values: DMatrix<f64>,
        timestamps: Option<Vec<i64>>,
        names: Vec<String>,
        mask: MissingnessMask,
    ) -> Result<Self> {
        let (n, p) = values.shape();
        if n == 0 {
            return Err(Error::InvalidDataset("no data rows".into()));
        }
        if p == 0 {
            return Err(Error::InvalidDataset("no variables".into()));
        }
        if mask.nrows() != n || mask.ncols() != p {
            return Err(Error::InvalidDataset(format!(
                "mask is {}x{}, values are {n}x{p}",
                mask.nrows(),
                mask.ncols()
            )));
        }
        if names.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: names.len(),
            });
        }
        if let Some(ts) = &timestamps {
            if ts.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: ts.len(),
                });
            }
            if let Some(w) = ts.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::InvalidDataset(format!(
                    "timestamps not strictly increasing at row {}",
                    w + 1
                )));
            }
        }
        for j in 0..p {
            for t in 0..n {
                if mask.is_missing(t, j) {
                    values[(t, j)] = f64::NAN;
                } else if !values[(t, j)].is_finite() {
                    return Err(Error::InvalidDataset(format!(
                        "observed cell ({t}, {j}) is not finite"
                    )));
                }
            }
        }
        Ok(Self {
            values,
            timestamps,
            names,
            mask,
        })
    }

    /// Treats every non-finite cell as missing.
    pub fn from_matrix(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let mask = MissingnessMask::from_non_finite(&values);
        Self::new(values, None, names, mask)
    }

    /// Row-major construction with `None` for missing cells; columns are named
    /// `x1..xp`.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidDataset("ragged rows".into()));
        }
        let values = DMatrix::from_fn(n, p, |t, j| rows[t][j].unwrap_or(f64::NAN));
        Self::from_matrix(values, default_names(p))
    }

    /// A single-column series with `None` for missing cells.
    pub fn from_series(series: &[Option<f64>]) -> Result<Self> {
        let values = DMatrix::from_fn(series.len(), 1, |t, _| series[t].unwrap_or(f64::NAN));
        Self::from_matrix(values, default_names(1))
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn mask(&self) -> &MissingnessMask {
        &self.mask
    }

    /// Value of an observed cell, `None` when missing.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        (!self.mask.is_missing(row, col)).then(|| self.values[(row, col)])
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_complete(&self) -> bool {
        self.mask.total_missing() == 0
    }

    /// Observed values of one column, in row order.
    pub fn observed_values(&self, col: usize) -> Vec<f64> {
        self.mask
            .observed_rows(col)
            .into_iter()
            .map(|t| self.values[(t, col)])
            .collect()
    }

    /// Replaces the values with a completed matrix and clears the mask.
    pub fn with_completed(&self, completed: DMatrix<f64>) -> Result<Self> {
        if completed.shape() != self.values.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.ncols(),
                found: completed.ncols(),
            });
        }
        Self::new(
            completed,
            self.timestamps.clone(),
            self.names.clone(),
            MissingnessMask::all_observed(self.nrows(), self.ncols()),
        )
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let p = self.ncols();
        let values = DMatrix::from_fn(rows.len(), p, |i, j| self.values[(rows[i], j)]);
        let mut mask = MissingnessMask::all_observed(rows.len(), p);
        for (i, &t) in rows.iter().enumerate() {
            for j in 0..p {
                mask.set(i, j, self.mask.is_missing(t, j));
            }
        }
        let timestamps = self
            .timestamps
            .as_ref()
            .map(|ts| rows.iter().map(|&t| ts[t]).collect());
        Self::new(values, timestamps, self.names.clone(), mask)
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let n = self.nrows();
        for &c in cols {
            if c >= self.ncols() {
                return Err(Error::ColumnOutOfRange {
                    column: c,
                    columns: self.ncols(),
                });
            }
        }
        let values = DMatrix::from_fn(n, cols.len(), |t, k| self.values[(t, cols[k])]);
        let mut mask = MissingnessMask::all_observed(n, cols.len());
        for (k, &c) in cols.iter().enumerate() {
            for t in 0..n {
                mask.set(t, k, self.mask.is_missing(t, c));
            }
        }
        let names = cols.iter().map(|&c| self.names[c].clone()).collect();
        Self::new(values, self.timestamps.clone(), names, mask)
    }

    /// Flags additional cells missing; used by the missingness injectors.
    pub(crate) fn with_mask(&self, mask: MissingnessMask) -> Result<Self> {
        Self::new(
            self.values.clone(),
            self.timestamps.clone(),
            self.names.clone(),
            mask,
        )
    }

    pub(crate) fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let mut values = self.values.clone();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                if v.is_finite() {
                    *v = f(j, *v);
                }
            }
        }
        Self {
            values,
            timestamps: self.timestamps.clone(),
            names: self.names.clone(),
            mask: self.mask.clone(),
        }
    }
}

/// Equality over shape, names, timestamps, mask and observed values (bitwise);
/// the `NaN` placeholders in missing cells are ignored.
impl PartialEq for TimeSeriesDataset {
    fn eq(&self, other: &Self) -> bool {
        self.mask == other.mask
            && self.names == other.names
            && self.timestamps == other.timestamps
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

pub(crate) fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Per-column location and scale over observed entries (population SD).
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl StandardizationParams {
    pub fn identity(p: usize) -> Self {
        Self {
            means: alloc::vec![0.0; p],
            sds: alloc::vec![1.0; p],
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// Maps a native-unit value of column `j` to the standardized scale.
    #[inline]
    pub fn forward(&self, j: usize, x: f64) -> f64 {
        (x - self.means[j]) / self.sds[j]
    }

    /// Maps a standardized value of column `j` back to native units.
    #[inline]
    pub fn inverse(&self, j: usize, z: f64) -> f64 {
        z * self.sds[j] + self.means[j]
    }

    /// Destandardizes a full matrix in place.
    pub fn inverse_matrix(&self, m: &mut DMatrix<f64>) {
        for (j, mut col) in m.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = self.inverse(j, *v);
            }
        }
    }
}

/// Centers and scales each column to mean 0 and population SD 1 over its
/// observed entries.
pub fn standardize(ds: &TimeSeriesDataset) -> Result<(TimeSeriesDataset, StandardizationParams)> {
    let p = ds.ncols();
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for j in 0..p {
        let obs = ds.observed_values(j);
        if obs.len() < 2 {
            return Err(Error::TooFewObserved {
                column: j,
                observed: obs.len(),
                required: 2,
            });
        }
        let (mean, sd) = mean_and_population_sd(&obs);
        if sd == 0.0 || !sd.is_finite() {
            return Err(Error::ZeroVariance { column: j });
        }
        means.push(mean);
        sds.push(sd);
    }
    let params = StandardizationParams { means, sds };
    let out = ds.map_values(|j, x| params.forward(j, x));
    Ok((out, params))
}

/// Inverse of [`standardize`]: `x · s_j + μ_j` on every cell.
pub fn destandardize(
    ds: &TimeSeriesDataset,
    params: &StandardizationParams,
) -> Result<TimeSeriesDataset> {
    if params.len() != ds.ncols() || params.sds.len() != params.means.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.ncols(),
            found: params.len(),
        });
    }
    Ok(ds.map_values(|j, z| params.inverse(j, z)))
}

pub(crate) fn mean_and_population_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}
