//! Time-lagged MICE: per-variable least-squares conditionals on the lagged
//! design, with stochastic Gaussian predictive draws.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::TimeSeriesDataset;
use crate::design::{build_lagged_design, Initialization, LagOrder, LaggedDesign, TimeFeatureSpec};
use crate::error::{invalid, Error, Result};
use crate::imputation::{config_hash, ImputationResult, Prepared, SingleImputation};
use crate::rng::stream;

/// Residual-SD floor on the standardized scale.
pub const SIGMA_FLOOR: f64 = 1e-8;
/// Ridge penalty used when the normal equations are rank deficient.
pub const RIDGE_FALLBACK: f64 = 1e-8;

/// Least-squares conditional model of one column.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalFit {
    pub target: usize,
    pub coefficients: DVector<f64>,
    /// Residual SD with divisor `n_obs − d`, floored at [`SIGMA_FLOOR`].
    pub sigma: f64,
    /// Too few observed rows: intercept-only model with the observed SD.
    pub intercept_only: bool,
    /// Normal equations needed the ridge penalty.
    pub ridged: bool,
}

fn solve_normal_equations(z: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, bool) {
    let gram = z.tr_mul(z);
    let cross = z.tr_mul(y);
    let d = gram.nrows();
    let max_diag = (0..d).map(|k| gram[(k, k)]).fold(0.0, f64::max);
    if let Some(chol) = gram.clone().cholesky() {
        let l = chol.l_dirty();
        let min_pivot = (0..d).map(|k| l[(k, k)] * l[(k, k)]).fold(f64::INFINITY, f64::min);
        // a numerically singular Gram matrix can still factor with tiny pivots
        if min_pivot > 1e-10 * max_diag.max(1.0) {
            return (chol.solve(&cross), false);
        }
    }
    let ridged = gram + DMatrix::identity(d, d) * RIDGE_FALLBACK;
    let beta = match ridged.clone().cholesky() {
        Some(c) => c.solve(&cross),
        None => ridged.lu().solve(&cross).unwrap_or_else(|| DVector::zeros(d)),
    };
    (beta, true)
}

/// Fits column `design.target` (values `y`, full length) on the observed rows.
pub fn fit_conditional(design: &LaggedDesign, y: &[f64], obs_rows: &[usize]) -> Result<ConditionalFit> {
    if y.len() != design.nrows() {
        return Err(Error::DimensionMismatch {
            expected: design.nrows(),
            found: y.len(),
        });
    }
    if obs_rows.is_empty() {
        return Err(Error::FullyMissingColumn { column: design.target });
    }
    let d = design.dim();
    let n = obs_rows.len();
    if n <= d {
        let obs: Vec<f64> = obs_rows.iter().map(|&t| y[t]).collect();
        let (mean, sd) = crate::dataset::mean_and_population_sd(&obs);
        let mut coefficients = DVector::zeros(d);
        coefficients[0] = mean;
        return Ok(ConditionalFit {
            target: design.target,
            coefficients,
            sigma: sd.max(SIGMA_FLOOR),
            intercept_only: true,
            ridged: false,
        });
    }
    let z = design.select_rows(obs_rows);
    let yv = DVector::from_iterator(n, obs_rows.iter().map(|&t| y[t]));
    let (coefficients, ridged) = solve_normal_equations(&z, &yv);
    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression coefficients"));
    }
    let resid = &yv - &z * &coefficients;
    let sigma = libm::sqrt(resid.norm_squared() / (n - d) as f64).max(SIGMA_FLOOR);
    Ok(ConditionalFit {
        target: design.target,
        coefficients,
        sigma,
        intercept_only: false,
        ridged,
    })
}

impl ConditionalFit {
    pub fn predict(&self, z: &[f64]) -> f64 {
        self.coefficients.iter().zip(z).map(|(b, v)| b * v).sum()
    }
}

/// `zᵀβ̂ + σ̂·ξ`.
pub fn draw_predictive<R: Rng + ?Sized>(fit: &ConditionalFit, z: &[f64], rng: &mut R) -> Result<f64> {
    if z.len() != fit.coefficients.len() {
        return Err(Error::DimensionMismatch {
            expected: fit.coefficients.len(),
            found: z.len(),
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("predictor vector"));
    }
    let xi: f64 = StandardNormal.sample(rng);
    Ok(fit.predict(z) + fit.sigma * xi)
}

/// Order in which the incomplete columns are visited within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VisitOrder {
    #[default]
    Column,
    AscendingMissing,
}

impl VisitOrder {
    pub fn order(self, ds: &TimeSeriesDataset, cols: &[usize]) -> Vec<usize> {
        let mut out = cols.to_vec();
        if self == VisitOrder::AscendingMissing {
            out.sort_by_key(|&j| (ds.mask().missing_count(j), j));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiceConfig {
    /// Sweeps `K`.
    pub sweeps: usize,
    /// Imputations `m`.
    pub imputations: usize,
    pub lags: LagOrder,
    pub init: Initialization,
    pub visit_order: VisitOrder,
    pub time_features: TimeFeatureSpec,
    pub seed: u64,
}

impl Default for MiceConfig {
    fn default() -> Self {
        Self {
            sweeps: 10,
            imputations: 5,
            lags: LagOrder::symmetric(1),
            init: Initialization::Mean,
            visit_order: VisitOrder::Column,
            time_features: TimeFeatureSpec::none(),
            seed: 0,
        }
    }
}

impl MiceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(invalid("sweeps", "must be at least 1"));
        }
        if self.imputations == 0 {
            return Err(invalid("imputations", "must be at least 1"));
        }
        Ok(())
    }

    /// Seed of imputation `r` (1-based).
    pub fn imputation_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }

    pub fn hash(&self) -> u64 {
        config_hash(&alloc::format!("{self:?}"))
    }
}

/// One imputation: initialize, then `K` sweeps of fit-and-draw over the
/// incomplete columns. `sweep_changes`, when given, receives the mean absolute
/// change of the imputed cells in each sweep (standardized scale).
pub fn impute_once(
    prep: &Prepared,
    cfg: &MiceConfig,
    r: usize,
    mut sweep_changes: Option<&mut Vec<f64>>,
) -> Result<SingleImputation> {
    cfg.validate()?;
    let seed = cfg.imputation_seed(r);
    let ds = &prep.standardized;
    let mut x = cfg.init.apply(ds)?;
    let order = cfg.visit_order.order(ds, &prep.missing_cols);
    let mut rng = stream(seed, &[0x4d49_4345]);
    let mut last_fit: Vec<Option<(ConditionalFit, LaggedDesign)>> = alloc::vec![None; ds.ncols()];
    for _ in 0..cfg.sweeps {
        let mut change = 0.0;
        for &j in &order {
            let design = build_lagged_design(&x, j, cfg.lags, &prep.time_features)?;
            let y: Vec<f64> = x.column(j).iter().copied().collect();
            let fit = fit_conditional(&design, &y, &ds.mask().observed_rows(j))?;
            for t in ds.mask().missing_rows(j) {
                let v = draw_predictive(&fit, &design.row(t), &mut rng)?;
                change += (v - x[(t, j)]).abs();
                x[(t, j)] = v;
            }
            last_fit[j] = Some((fit, design));
        }
        if let Some(log) = sweep_changes.as_deref_mut() {
            log.push(change / prep.cells.len().max(1) as f64);
        }
    }
    let mut predictive_mean = Vec::with_capacity(prep.cells.len());
    let mut predictive_var = Vec::with_capacity(prep.cells.len());
    for &(t, j) in &prep.cells {
        let (fit, design) = last_fit[j].as_ref().expect("every incomplete column is visited");
        let sd = prep.params.sds[j];
        predictive_mean.push(prep.params.inverse(j, fit.predict(&design.row(t))));
        predictive_var.push(fit.sigma * fit.sigma * sd * sd);
    }
    prep.params.inverse_matrix(&mut x);
    Ok(SingleImputation {
        completed: x,
        predictive_mean,
        predictive_var,
        seed,
        chains: Vec::new(),
    })
}

/// Runs `m` independent imputations, each restarting from the initialization.
pub fn run_mice(ds: &TimeSeriesDataset, cfg: &MiceConfig) -> Result<ImputationResult> {
    cfg.validate()?;
    let prep = Prepared::new(ds, &cfg.time_features)?;
    let seeds: Vec<u64> = (1..=cfg.imputations).map(|r| cfg.imputation_seed(r)).collect();
    if prep.is_complete() {
        return ImputationResult::passthrough(&prep, "mice", "-", cfg.hash(), seeds);
    }
    let runs = (1..=cfg.imputations)
        .map(|r| impute_once(&prep, cfg, r, None))
        .collect::<Result<Vec<_>>>()?;
    ImputationResult::assemble(&prep, "mice", "-", cfg.hash(), runs)
}
