//! Gaussian linear regression target with a Gaussian prior on the
//! coefficients and an inverse-Gamma prior on the residual variance.
//!
//! The inverse-Gamma is parameterized by shape `v1` and scale `v2`, with
//! density proportional to `(τ²)^(-v1-1) · exp(-v2 / τ²)`.

use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::design::LaggedDesign;
use crate::error::{invalid, Error, Result};

/// `θ ~ N(0, σ² I)`, `τ² ~ IG(v1, v2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    /// σ², the isotropic prior variance of θ.
    pub theta_var: f64,
    /// v1
    pub ig_shape: f64,
    /// v2
    pub ig_scale: f64,
}

impl Default for PriorSpec {
    /// Diffuse relative to standardized data.
    fn default() -> Self {
        Self {
            theta_var: 100.0,
            ig_shape: 2.0,
            ig_scale: 1.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("theta_var", self.theta_var),
            ("ig_shape", self.ig_shape),
            ("ig_scale", self.ig_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Observed rows of one conditional regression, with cached sufficient
/// statistics `ZᵀZ`, `Zᵀy` and `yᵀy`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    design: DMatrix<f64>,
    response: DVector<f64>,
    gram: DMatrix<f64>,
    cross: DVector<f64>,
    yty: f64,
}

impl RegressionProblem {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        if design.nrows() != response.len() {
            return Err(Error::DimensionMismatch {
                expected: design.nrows(),
                found: response.len(),
            });
        }
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::Empty);
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression problem"));
        }
        let gram = design.tr_mul(&design);
        let cross = design.tr_mul(&response);
        let yty = response.dot(&response);
        Ok(Self {
            design,
            response,
            gram,
            cross,
            yty,
        })
    }

    /// Rows `rows` of a lagged design against column `target` of `x`.
    pub fn from_design(
        design: &LaggedDesign,
        x: &DMatrix<f64>,
        rows: &[usize],
    ) -> Result<Self> {
        let z = design.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&t| x[(t, design.target)]));
        Self::new(z, y)
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.design.nrows()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn cross(&self) -> &DVector<f64> {
        &self.cross
    }

    /// Sum of squared residuals from the cached statistics.
    #[inline]
    pub fn ssr(&self, theta: &DVector<f64>) -> f64 {
        let quad = (&self.gram * theta).dot(theta);
        (self.yty - 2.0 * theta.dot(&self.cross) + quad).max(0.0)
    }

    /// Sum of squared residuals by a pass over the rows.
    pub fn ssr_direct(&self, theta: &DVector<f64>) -> f64 {
        let r = &self.response - &self.design * theta;
        r.dot(&r)
    }

    fn check(&self, theta: &DVector<f64>, tau2: f64) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(invalid("tau2", "must be positive"));
        }
        Ok(())
    }
}

/// `log N(y | Zθ, τ² I)` over the observed rows.
pub fn log_likelihood(theta: &DVector<f64>, tau2: f64, prob: &RegressionProblem) -> Result<f64> {
    prob.check(theta, tau2)?;
    Ok(log_likelihood_unchecked(theta, tau2, prob))
}

#[inline]
pub(crate) fn log_likelihood_unchecked(theta: &DVector<f64>, tau2: f64, prob: &RegressionProblem) -> f64 {
    let n = prob.n_obs() as f64;
    -0.5 * n * libm::log(2.0 * PI * tau2) - prob.ssr(theta) / (2.0 * tau2)
}

/// Log-density of `IG(shape, scale)` at `x`.
pub fn inverse_gamma_log_density(x: f64, shape: f64, scale: f64) -> f64 {
    shape * libm::log(scale) - libm::lgamma(shape) - (shape + 1.0) * libm::log(x) - scale / x
}

/// Log-density of `N(0, σ² I)` at `θ`.
pub fn gaussian_prior_log_density(theta: &DVector<f64>, theta_var: f64) -> f64 {
    let d = theta.len() as f64;
    -0.5 * d * libm::log(2.0 * PI * theta_var) - theta.dot(theta) / (2.0 * theta_var)
}

pub fn log_prior(theta: &DVector<f64>, tau2: f64, prior: &PriorSpec) -> Result<f64> {
    if !(tau2 > 0.0 && tau2.is_finite()) {
        return Err(invalid("tau2", "must be positive"));
    }
    prior.validate()?;
    Ok(log_prior_unchecked(theta, tau2, prior))
}

#[inline]
pub(crate) fn log_prior_unchecked(theta: &DVector<f64>, tau2: f64, prior: &PriorSpec) -> f64 {
    gaussian_prior_log_density(theta, prior.theta_var)
        + inverse_gamma_log_density(tau2, prior.ig_shape, prior.ig_scale)
}

/// Unnormalized log-posterior: log-likelihood plus log-prior.
pub fn log_posterior(
    theta: &DVector<f64>,
    tau2: f64,
    prob: &RegressionProblem,
    prior: &PriorSpec,
) -> Result<f64> {
    Ok(log_likelihood(theta, tau2, prob)? + log_prior(theta, tau2, prior)?)
}

#[inline]
pub(crate) fn log_posterior_unchecked(
    theta: &DVector<f64>,
    tau2: f64,
    prob: &RegressionProblem,
    prior: &PriorSpec,
) -> f64 {
    log_likelihood_unchecked(theta, tau2, prob) + log_prior_unchecked(theta, tau2, prior)
}

/// `∇_θ log π = Zᵀ(y − Zθ)/τ² − θ/σ²`.
pub fn grad_log_posterior_theta(
    theta: &DVector<f64>,
    tau2: f64,
    prob: &RegressionProblem,
    prior: &PriorSpec,
) -> Result<DVector<f64>> {
    prob.check(theta, tau2)?;
    prior.validate()?;
    Ok(grad_unchecked(theta, tau2, prob, prior))
}

#[inline]
pub(crate) fn grad_unchecked(
    theta: &DVector<f64>,
    tau2: f64,
    prob: &RegressionProblem,
    prior: &PriorSpec,
) -> DVector<f64> {
    (&prob.cross - &prob.gram * theta) / tau2 - theta / prior.theta_var
}

/// Mode of the log-posterior in θ at fixed τ²:
/// `(ZᵀZ + (τ²/σ²) I)⁻¹ Zᵀy`.
pub fn ridge_mode(prob: &RegressionProblem, prior: &PriorSpec, tau2: f64) -> Result<DVector<f64>> {
    let d = prob.dim();
    let a = &prob.gram + DMatrix::identity(d, d) * (tau2 / prior.theta_var);
    a.cholesky()
        .map(|c| c.solve(&prob.cross))
        .ok_or(Error::NonFinite("ridge system"))
}

/// Conditional posterior of θ given τ²: returns `(mean, covariance)` with
/// covariance `(ZᵀZ/τ² + I/σ²)⁻¹` and mean `cov · Zᵀy / τ²`.
pub fn conditional_theta_posterior(
    prob: &RegressionProblem,
    prior: &PriorSpec,
    tau2: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = prob.dim();
    let precision = &prob.gram / tau2 + DMatrix::identity(d, d) / prior.theta_var;
    let chol = precision.cholesky().ok_or(Error::NonFinite("posterior precision"))?;
    let cov = chol.inverse();
    let mean = &cov * &prob.cross / tau2;
    Ok((mean, cov))
}
