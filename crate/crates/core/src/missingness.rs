//! Controlled MCAR / MAR missingness injection with retained ground truth.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{mean_and_population_sd, MissingnessMask, TimeSeriesDataset};
use crate::error::{invalid, Error, Result};
use crate::rng::stream;

/// Missingness mechanism used to create a [`GroundTruthMask`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    Mcar,
    Mar,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Mcar => "mcar",
            Mechanism::Mar => "mar",
        })
    }
}

impl core::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mcar" => Ok(Mechanism::Mcar),
            "mar" => Ok(Mechanism::Mar),
            other => Err(invalid("mechanism", alloc::format!("unknown `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskDescriptor {
    pub mechanism: Mechanism,
    pub rate: f64,
    pub seed: u64,
    /// Columns eligible for masking.
    pub masked_vars: Vec<usize>,
}

/// A cell that was observed before injection and its true value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectedCell {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Injected cells, their pre-injection values and how they were generated.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMask {
    flags: MissingnessMask,
    cells: Vec<InjectedCell>,
    pub descriptor: MaskDescriptor,
}

impl GroundTruthMask {
    /// Rebuilds a ground-truth mask from stored cells (e.g. a CSV export).
    pub fn from_cells(
        rows: usize,
        cols: usize,
        mut cells: Vec<InjectedCell>,
        descriptor: MaskDescriptor,
    ) -> Result<Self> {
        let mut flags = MissingnessMask::all_observed(rows, cols);
        for c in &cells {
            if c.row >= rows || c.col >= cols {
                return Err(Error::InvalidDataset(alloc::format!(
                    "ground-truth cell ({}, {}) outside {rows}x{cols}",
                    c.row,
                    c.col
                )));
            }
            flags.set(c.row, c.col, true);
        }
        cells.sort_by_key(|c| (c.col, c.row));
        Ok(Self {
            flags,
            cells,
            descriptor,
        })
    }

    pub fn flags(&self) -> &MissingnessMask {
        &self.flags
    }

    /// Injected cells ordered by column, then row.
    pub fn cells(&self) -> &[InjectedCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_injected(&self, row: usize, col: usize) -> bool {
        self.flags.is_missing(row, col)
    }

    /// Injected cells of one column.
    pub fn column_cells(&self, col: usize) -> impl Iterator<Item = &InjectedCell> {
        self.cells.iter().filter(move |c| c.col == col)
    }

    /// Columns holding at least one injected cell.
    pub fn columns(&self) -> Vec<usize> {
        self.flags.missing_columns()
    }
}

fn apply(
    ds: &TimeSeriesDataset,
    injected: &[(usize, usize)],
    descriptor: MaskDescriptor,
) -> Result<(TimeSeriesDataset, GroundTruthMask)> {
    let mut mask = ds.mask().clone();
    let mut cells = Vec::with_capacity(injected.len());
    for &(t, j) in injected {
        let value = ds.get(t, j).ok_or(Error::AlreadyMissing { column: j })?;
        mask.set(t, j, true);
        cells.push(InjectedCell {
            row: t,
            col: j,
            value,
        });
    }
    let truth = GroundTruthMask::from_cells(ds.nrows(), ds.ncols(), cells, descriptor)?;
    Ok((ds.with_mask(mask)?, truth))
}

fn check_targets(ds: &TimeSeriesDataset, cols: &[usize]) -> Result<()> {
    for &j in cols {
        if j >= ds.ncols() {
            return Err(Error::ColumnOutOfRange {
                column: j,
                columns: ds.ncols(),
            });
        }
        if ds.mask().missing_count(j) > 0 {
            return Err(Error::AlreadyMissing { column: j });
        }
    }
    Ok(())
}

/// Flags each cell of the targeted columns missing independently with
/// probability `rate`. An empty `columns` slice targets every column.
pub fn inject_mcar(
    ds: &TimeSeriesDataset,
    rate: f64,
    columns: &[usize],
    seed: u64,
) -> Result<(TimeSeriesDataset, GroundTruthMask)> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(invalid("rate", "must lie in (0, 1)"));
    }
    let cols: Vec<usize> = if columns.is_empty() {
        (0..ds.ncols()).collect()
    } else {
        columns.to_vec()
    };
    check_targets(ds, &cols)?;
    let mut rng = stream(seed, &[0x4d43_4152]);
    let mut injected = Vec::new();
    for &j in &cols {
        for t in 0..ds.nrows() {
            if rng.random::<f64>() < rate {
                injected.push((t, j));
            }
        }
    }
    apply(
        ds,
        &injected,
        MaskDescriptor {
            mechanism: Mechanism::Mcar,
            rate,
            seed,
            masked_vars: cols,
        },
    )
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

const BISECTION_LO: f64 = -20.0;
const BISECTION_HI: f64 = 20.0;
const BISECTION_MAX_ITER: usize = 200;

/// Finds the intercept `α` such that `mean(logistic(α + score_t)) = target`.
/// Returns `None` when the target is not bracketed on `[-20, 20]` or the
/// bisection does not converge.
pub fn calibrate_intercept(scores: &[f64], target: f64) -> Option<f64> {
    let mean_prob = |a: f64| scores.iter().map(|s| logistic(a + s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (BISECTION_LO, BISECTION_HI);
    if scores.is_empty() || mean_prob(lo) > target || mean_prob(hi) < target {
        return None;
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let gap = mean_prob(mid) - target;
        if gap.abs() < 1e-12 || hi - lo < 1e-14 {
            return Some(mid);
        }
        if gap < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    ((mean_prob(mid) - target).abs() < 1e-4).then_some(mid)
}

/// Fitted logistic masking model for one masked variable.
#[derive(Debug, Clone, PartialEq)]
pub struct MarVariable {
    pub column: usize,
    pub intercept: f64,
    /// One weight per always-observed predictor column.
    pub weights: Vec<f64>,
    /// Per-row missingness probabilities.
    pub probabilities: Vec<f64>,
}

/// The logistic masking model: predictors are the standardized
/// always-observed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MarModel {
    pub predictors: Vec<usize>,
    pub variables: Vec<MarVariable>,
}

impl MarModel {
    pub fn mean_probability(&self, col: usize) -> Option<f64> {
        self.variables.iter().find(|v| v.column == col).map(|v| {
            v.probabilities.iter().sum::<f64>() / v.probabilities.len() as f64
        })
    }
}

/// Weights for the MAR model: either drawn from a standard-normal stream keyed
/// by the seed, or fixed by the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarWeights<'a> {
    Seeded,
    Fixed(&'a [f64]),
}

/// Builds the calibrated logistic missingness model without drawing a mask.
pub fn mar_model(
    ds: &TimeSeriesDataset,
    masked_vars: &[usize],
    target_rate: f64,
    seed: u64,
    weights: MarWeights<'_>,
) -> Result<MarModel> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(invalid("target_rate", "must lie in (0, 1)"));
    }
    if masked_vars.is_empty() {
        return Err(invalid("masked_vars", "must not be empty"));
    }
    let mut sorted = masked_vars.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != masked_vars.len() {
        return Err(invalid("masked_vars", "contains duplicates"));
    }
    if sorted.len() >= ds.ncols() {
        return Err(invalid(
            "masked_vars",
            "must leave at least one column fully observed",
        ));
    }
    check_targets(ds, &sorted)?;
    let predictors: Vec<usize> = (0..ds.ncols()).filter(|j| !sorted.contains(j)).collect();
    for &c in &predictors {
        if ds.mask().missing_count(c) > 0 {
            return Err(Error::AlreadyMissing { column: c });
        }
    }
    if let MarWeights::Fixed(w) = weights {
        if w.len() != predictors.len() {
            return Err(Error::DimensionMismatch {
                expected: predictors.len(),
                found: w.len(),
            });
        }
    }

    let n = ds.nrows();
    // standardized always-observed predictors; constant columns contribute 0
    let z: Vec<Vec<f64>> = predictors
        .iter()
        .map(|&c| {
            let col: Vec<f64> = (0..n).map(|t| ds.values()[(t, c)]).collect();
            let (m, s) = mean_and_population_sd(&col);
            col.iter()
                .map(|x| if s > 0.0 { (x - m) / s } else { 0.0 })
                .collect()
        })
        .collect();

    let mut wrng = stream(seed, &[0x4d41_5257]);
    let mut variables = Vec::with_capacity(masked_vars.len());
    for &col in masked_vars {
        let w: Vec<f64> = match weights {
            MarWeights::Seeded => (0..predictors.len())
                .map(|_| StandardNormal.sample(&mut wrng))
                .collect(),
            MarWeights::Fixed(w) => w.to_vec(),
        };
        let scores: Vec<f64> = (0..n)
            .map(|t| w.iter().zip(&z).map(|(wk, zk)| wk * zk[t]).sum())
            .collect();
        let intercept =
            calibrate_intercept(&scores, target_rate).ok_or(Error::CalibrationFailed { column: col })?;
        let probabilities = scores.iter().map(|s| logistic(intercept + s)).collect();
        variables.push(MarVariable {
            column: col,
            intercept,
            weights: w,
            probabilities,
        });
    }
    Ok(MarModel {
        predictors,
        variables,
    })
}

/// Logistic MAR masking: each masked variable gets its own calibrated
/// intercept so that its mean missingness probability equals `target_rate`.
pub fn inject_mar(
    ds: &TimeSeriesDataset,
    masked_vars: &[usize],
    target_rate: f64,
    seed: u64,
) -> Result<(TimeSeriesDataset, GroundTruthMask)> {
    let model = mar_model(ds, masked_vars, target_rate, seed, MarWeights::Seeded)?;
    inject_with_model(ds, &model, target_rate, seed)
}

/// Draws a mask from an already calibrated [`MarModel`].
pub fn inject_with_model(
    ds: &TimeSeriesDataset,
    model: &MarModel,
    target_rate: f64,
    seed: u64,
) -> Result<(TimeSeriesDataset, GroundTruthMask)> {
    let mut rng = stream(seed, &[0x4d41_524d]);
    let mut injected = Vec::new();
    for var in &model.variables {
        for (t, &prob) in var.probabilities.iter().enumerate() {
            if rng.random::<f64>() < prob {
                injected.push((t, var.column));
            }
        }
    }
    apply(
        ds,
        &injected,
        MaskDescriptor {
            mechanism: Mechanism::Mar,
            rate: target_rate,
            seed,
            masked_vars: model.variables.iter().map(|v| v.column).collect(),
        },
    )
}

/// Drops rows whose missing fraction strictly exceeds `max_fraction`.
pub fn filter_rows_by_missingness(
    ds: &TimeSeriesDataset,
    max_fraction: f64,
) -> Result<TimeSeriesDataset> {
    if !(0.0..=1.0).contains(&max_fraction) {
        return Err(invalid("max_fraction", "must lie in [0, 1]"));
    }
    let p = ds.ncols() as f64;
    let keep: Vec<usize> = (0..ds.nrows())
        .filter(|&t| ds.mask().row_missing_count(t) as f64 / p <= max_fraction)
        .collect();
    if keep.is_empty() {
        return Err(Error::AllRowsDropped);
    }
    ds.select_rows(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use nalgebra::DMatrix;
    use rand_distr::Distribution;

    fn normal_dataset(n: usize, p: usize, seed: u64) -> TimeSeriesDataset {
        let mut rng = crate::rng::seeded(seed);
        let values = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        TimeSeriesDataset::from_matrix(values, crate::dataset::default_names(p)).unwrap()
    }

    #[test]
    fn mcar_rejects_bad_rates() {
        let ds = normal_dataset(10, 2, 1);
        assert!(inject_mcar(&ds, 0.0, &[], 1).is_err());
        assert!(inject_mcar(&ds, 1.0, &[], 1).is_err());
        assert!(inject_mcar(&ds, -0.1, &[], 1).is_err());
    }

    #[test]
    fn mcar_vanishing_rate_injects_nothing() {
        let ds = normal_dataset(50, 2, 2);
        let (_, truth) = inject_mcar(&ds, 1e-9, &[], 3).unwrap();
        assert!(truth.is_empty());
    }

    #[test]
    fn mcar_count_within_binomial_band() {
        let ds = normal_dataset(500, 2, 4);
        let (masked, truth) = inject_mcar(&ds, 0.2, &[], 9).unwrap();
        // 1000 cells: 200 ± 3·sqrt(160)
        assert!((162..=238).contains(&truth.len()), "{}", truth.len());
        assert_eq!(masked.mask().total_missing(), truth.len());
    }

    #[test]
    fn mcar_is_deterministic_and_keeps_truth_exact() {
        let ds = normal_dataset(40, 3, 5);
        let (a, ta) = inject_mcar(&ds, 0.3, &[], 11).unwrap();
        let (b, tb) = inject_mcar(&ds, 0.3, &[], 11).unwrap();
        assert_eq!(a.mask(), b.mask());
        assert_eq!(ta, tb);
        for c in ta.cells() {
            assert_eq!(c.value.to_bits(), ds.values()[(c.row, c.col)].to_bits());
        }
    }

    #[test]
    fn mcar_refuses_already_missing_columns() {
        let ds = TimeSeriesDataset::from_series(&[Some(1.0), None, Some(2.0)]).unwrap();
        assert_eq!(
            inject_mcar(&ds, 0.5, &[], 1).unwrap_err(),
            Error::AlreadyMissing { column: 0 }
        );
    }

    #[test]
    fn mcar_targets_only_selected_columns() {
        let ds = normal_dataset(200, 3, 6);
        let (masked, _) = inject_mcar(&ds, 0.5, &[1], 1).unwrap();
        assert_eq!(masked.mask().missing_columns(), vec![1]);
    }

    #[test]
    fn zero_weights_give_constant_probability() {
        let ds = normal_dataset(100, 3, 7);
        let model = mar_model(&ds, &[0], 0.4, 1, MarWeights::Fixed(&[0.0, 0.0])).unwrap();
        let v = &model.variables[0];
        // logit(0.4) = ln(0.4 / 0.6)
        assert!((v.intercept - libm::log(0.4 / 0.6)).abs() < 1e-9);
        assert!((v.intercept + 0.405).abs() < 1e-3);
        assert!(v.probabilities.iter().all(|p| (p - 0.4).abs() < 1e-9));
    }

    #[test]
    fn mar_requires_an_observed_predictor() {
        let ds = normal_dataset(30, 2, 8);
        assert!(inject_mar(&ds, &[0, 1], 0.4, 1).is_err());
        assert!(inject_mar(&ds, &[], 0.4, 1).is_err());
    }

    #[test]
    fn mar_calibrates_mean_probability() {
        let ds = normal_dataset(1000, 6, 9);
        let model = mar_model(&ds, &[0, 1, 2, 3], 0.4, 5, MarWeights::Seeded).unwrap();
        for v in &model.variables {
            assert!((model.mean_probability(v.column).unwrap() - 0.4).abs() < 1e-4);
        }
        assert_eq!(model.predictors, vec![4, 5]);
    }

    #[test]
    fn mar_leaves_predictors_observed() {
        let ds = normal_dataset(300, 4, 10);
        let (masked, truth) = inject_mar(&ds, &[1, 3], 0.4, 2).unwrap();
        assert_eq!(masked.mask().missing_count(0), 0);
        assert_eq!(masked.mask().missing_count(2), 0);
        assert_eq!(truth.columns(), vec![1, 3]);
    }

    #[test]
    fn filter_drops_sparse_rows() {
        let ds = TimeSeriesDataset::from_rows(&[
            vec![Some(1.0), None, None, None, None, Some(2.0)],
            vec![Some(1.0), Some(1.0), None, Some(1.0), Some(1.0), Some(2.0)],
        ])
        .unwrap();
        let out = filter_rows_by_missingness(&ds, 0.6).unwrap();
        assert_eq!(out.nrows(), 1);
        assert_eq!(out.mask().row_missing_count(0), 1);
        assert_eq!(filter_rows_by_missingness(&ds, 1.0).unwrap(), ds);
        assert_eq!(
            filter_rows_by_missingness(&ds, 0.0).unwrap_err(),
            Error::AllRowsDropped
        );
    }

    #[test]
    fn filter_keeps_complete_data() {
        let ds = normal_dataset(20, 3, 11);
        assert_eq!(filter_rows_by_missingness(&ds, 0.0).unwrap(), ds);
    }
}
