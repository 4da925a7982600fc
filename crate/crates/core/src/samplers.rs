//! Random-walk Metropolis and Metropolis-adjusted Langevin kernels for the
//! regression posterior, with Robbins–Monro scale adaptation during burn-in.
//!
//! RWM proposes `(θ, log τ²)` jointly and accepts them as one block, with the
//! log-scale Jacobian in the ratio. MALA moves θ along the gradient and then
//! refreshes τ² with an exact inverse-Gamma Gibbs draw.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::posterior::{
    grad_unchecked, log_posterior_unchecked, ridge_mode, PriorSpec, RegressionProblem,
};

/// Optimal-scaling constant for random-walk proposals.
pub const RWM_SCALE: f64 = 2.38;
/// Optimal-scaling constant for Langevin proposals.
pub const MALA_SCALE: f64 = 1.65;
/// Regularization added to the empirical proposal covariance.
pub const PROPOSAL_RIDGE: f64 = 1e-6;
/// Consecutive rejections after which a chain is declared stalled.
pub const STALL_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    /// RWM with the scaled empirical covariance of the design rows.
    RwmEmpirical,
    /// RWM with the scaled identity.
    RwmIdentity,
    /// RWM shaped like the posterior: scaled `n·(ZᵀZ)⁻¹`.
    RwmPrecision,
    Mala,
}

impl SamplerKind {
    pub fn is_rwm(self) -> bool {
        !matches!(self, SamplerKind::Mala)
    }

    /// Midpoint of the acceptance band targeted by adaptation.
    pub fn target_acceptance(self) -> f64 {
        if self.is_rwm() {
            0.25
        } else {
            0.60
        }
    }

    /// Acceptance band considered healthy after burn-in.
    pub fn acceptance_band(self) -> (f64, f64) {
        if self.is_rwm() {
            (0.20, 0.30)
        } else {
            (0.55, 0.65)
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::RwmEmpirical => "rwm",
            SamplerKind::RwmIdentity => "rwm-identity",
            SamplerKind::RwmPrecision => "rwm-precision",
            SamplerKind::Mala => "mala",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rwm" | "rwm-empirical" => Ok(SamplerKind::RwmEmpirical),
            "rwm-identity" => Ok(SamplerKind::RwmIdentity),
            "rwm-precision" => Ok(SamplerKind::RwmPrecision),
            "mala" => Ok(SamplerKind::Mala),
            other => Err(invalid("sampler", alloc::format!("unknown `{other}`"))),
        }
    }
}

/// How the printed MALA constant is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MalaConvention {
    /// `ε = 1.65² / d^(1/3)` is the proposal standard deviation.
    #[default]
    AsPrinted,
    /// `ε² = 1.65² / d^(1/3)` is the proposal variance.
    Variance,
}

/// `(2.38²/d)·Σ + ε·I` when there are at least `d + 5` rows, otherwise
/// `(2.38²/d)·I`. `Σ` is the empirical covariance (divisor `n − 1`) of the
/// design rows, bias column included. A constant column (the bias) has no
/// empirical spread, which would freeze its coefficient at the ridge scale;
/// such columns take the mean variance of the varying ones instead (1 if
/// every column is constant).
pub fn rwm_proposal_cov(design_rows: &DMatrix<f64>, eps_reg: f64) -> Result<DMatrix<f64>> {
    let (n, d) = design_rows.shape();
    if n == 0 {
        return Err(Error::Empty);
    }
    if d == 0 {
        return Err(invalid("design_rows", "need at least one column"));
    }
    let factor = RWM_SCALE * RWM_SCALE / d as f64;
    if n < d + 5 {
        return Ok(DMatrix::identity(d, d) * factor);
    }
    let means = design_rows.row_mean();
    let mut centered = design_rows.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let mut cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    let max_var = cov.diagonal().max();
    let flat = |v: f64| v <= 1e-12 * max_var;
    let varying: Vec<f64> = cov.diagonal().iter().copied().filter(|&v| !flat(v)).collect();
    let fill = if varying.is_empty() {
        1.0
    } else {
        varying.iter().sum::<f64>() / varying.len() as f64
    };
    for k in 0..d {
        if flat(cov[(k, k)]) {
            cov[(k, k)] = fill;
        }
    }
    Ok(cov * factor + DMatrix::identity(d, d) * eps_reg)
}

/// `(2.38²/d)·n·(G + ε·I)⁻¹` for the Gram matrix `G = ZᵀZ` of `n` rows: the
/// shape of the posterior covariance of θ, so correlated predictors do not
/// slow the chain. Falls back to the scaled identity when `n < d + 5`.
pub fn rwm_precision_cov(gram: &DMatrix<f64>, n: usize, eps_reg: f64) -> Result<DMatrix<f64>> {
    let d = gram.nrows();
    if d == 0 || gram.ncols() != d {
        return Err(invalid("gram", "must be square and non-empty"));
    }
    let factor = RWM_SCALE * RWM_SCALE / d as f64;
    if n < d + 5 {
        return Ok(DMatrix::identity(d, d) * factor);
    }
    let scale = gram.diagonal().max().max(1.0);
    let reg = gram + DMatrix::identity(d, d) * (eps_reg * scale);
    let inv = reg
        .cholesky()
        .ok_or(invalid("gram", "not positive definite"))?
        .inverse();
    let mut cov = inv * (n as f64 * factor);
    cov = (&cov + cov.transpose()) * 0.5;
    Ok(cov)
}

/// Random-walk step on `log τ²` for `n` observations when proposed alongside
/// `extra` other coordinates: `(2.38/√extra) · √(2/n)`.
pub fn tau_step(n: usize, extra: usize) -> f64 {
    RWM_SCALE / libm::sqrt(extra.max(1) as f64) * libm::sqrt(2.0 / n.max(1) as f64)
}

/// `1.65² / d^(1/3)`.
pub fn mala_step_size(d: usize) -> f64 {
    MALA_SCALE * MALA_SCALE / libm::cbrt(d.max(1) as f64)
}

/// How τ² moves within a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauUpdate {
    /// τ² held at its initial value.
    Fixed,
    /// Separate Metropolis random walk on `log τ²` with this standard
    /// deviation, after the θ move.
    RandomWalk(f64),
    /// Random walk on `log τ²` proposed jointly with θ and accepted as one
    /// block.
    JointRandomWalk(f64),
    /// Exact inverse-Gamma draw after the θ move.
    Gibbs,
}

/// Proposal configuration, including the adapted scale multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSpec {
    pub kind: SamplerKind,
    /// Lower Cholesky factor of the RWM proposal covariance.
    chol: Option<DMatrix<f64>>,
    /// MALA step ε (proposal standard deviation before scaling).
    pub mala_step: f64,
    /// Adaptive multiplier applied to the θ proposal.
    pub scale: f64,
    pub tau_update: TauUpdate,
    /// Adaptation steps taken so far; continues across warm-started runs.
    pub adapt_steps: usize,
}

impl ProposalSpec {
    /// RWM proposal from an explicit covariance.
    pub fn rwm_with_cov(kind: SamplerKind, cov: &DMatrix<f64>, tau_update: TauUpdate) -> Result<Self> {
        let chol = cov
            .clone()
            .cholesky()
            .ok_or(invalid("proposal_cov", "not positive definite"))?
            .l();
        Ok(Self {
            kind,
            chol: Some(chol),
            mala_step: 0.0,
            scale: 1.0,
            tau_update,
            adapt_steps: 0,
        })
    }

    /// RWM proposal for a regression problem. τ² moves by its own random walk
    /// on `log τ²` with step `2.38 · √(2/n)`, the one-dimensional optimal scale
    /// for the approximate posterior spread `√(2/n)` of `log τ²`.
    pub fn rwm(kind: SamplerKind, prob: &RegressionProblem) -> Result<Self> {
        let d = prob.dim();
        let cov = match kind {
            SamplerKind::RwmEmpirical => rwm_proposal_cov(prob.design(), PROPOSAL_RIDGE)?,
            SamplerKind::RwmIdentity => DMatrix::identity(d, d) * (RWM_SCALE * RWM_SCALE / d as f64),
            SamplerKind::RwmPrecision => rwm_precision_cov(prob.gram(), prob.n_obs(), PROPOSAL_RIDGE)?,
            SamplerKind::Mala => return Err(invalid("kind", "not a random-walk sampler")),
        };
        Self::rwm_with_cov(kind, &cov, TauUpdate::RandomWalk(tau_step(prob.n_obs(), 1)))
    }

    pub fn mala(d: usize, convention: MalaConvention) -> Self {
        let eps = mala_step_size(d);
        let step = match convention {
            MalaConvention::AsPrinted => eps,
            MalaConvention::Variance => libm::sqrt(eps),
        };
        Self {
            kind: SamplerKind::Mala,
            chol: None,
            mala_step: step,
            scale: 1.0,
            tau_update: TauUpdate::Gibbs,
            adapt_steps: 0,
        }
    }

    /// Builds the default proposal for `kind`.
    pub fn for_problem(kind: SamplerKind, prob: &RegressionProblem, convention: MalaConvention) -> Result<Self> {
        match kind {
            SamplerKind::Mala => Ok(Self::mala(prob.dim(), convention)),
            _ => Self::rwm(kind, prob),
        }
    }

    pub fn cholesky(&self) -> Option<&DMatrix<f64>> {
        self.chol.as_ref()
    }

    /// Robbins–Monro update of `log scale` toward the target acceptance. The
    /// gain decays as `n^-0.6` and is floored at 0.01.
    pub fn adapt(&mut self, accept_prob: f64) {
        self.adapt_steps += 1;
        let gain = libm::pow(self.adapt_steps as f64, -0.6).max(0.01);
        let target = self.kind.target_acceptance();
        let log_scale = libm::log(self.scale) + gain * (accept_prob - target);
        self.scale = libm::exp(log_scale.clamp(-40.0, 10.0));
    }
}

/// Current sampler state with cached log-posterior (and gradient for MALA).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: DVector<f64>,
    pub tau2: f64,
    pub log_post: f64,
    pub grad: Option<DVector<f64>>,
    pub iteration: usize,
}

impl ChainState {
    pub fn new(
        theta: DVector<f64>,
        tau2: f64,
        prob: &RegressionProblem,
        prior: &PriorSpec,
        with_grad: bool,
    ) -> Result<Self> {
        if theta.len() != prob.dim() {
            return Err(Error::DimensionMismatch {
                expected: prob.dim(),
                found: theta.len(),
            });
        }
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return Err(invalid("tau2", "must be positive"));
        }
        prior.validate()?;
        let log_post = log_posterior_unchecked(&theta, tau2, prob, prior);
        let grad = with_grad.then(|| grad_unchecked(&theta, tau2, prob, prior));
        Ok(Self {
            theta,
            tau2,
            log_post,
            grad,
            iteration: 0,
        })
    }

    /// Starts at the ridge mode with the plug-in residual variance.
    pub fn at_mode(prob: &RegressionProblem, prior: &PriorSpec, with_grad: bool) -> Result<Self> {
        let tau2 = plug_in_tau2(prob, prior)?;
        let theta = ridge_mode(prob, prior, tau2)?;
        Self::new(theta, tau2, prob, prior, with_grad)
    }

    /// Over-dispersed start: the ridge mode perturbed by `spread` conditional
    /// posterior standard deviations per coordinate, and τ² scaled by
    /// `exp(spread · 0.5 · ξ)`.
    pub fn overdispersed<R: Rng + ?Sized>(
        prob: &RegressionProblem,
        prior: &PriorSpec,
        with_grad: bool,
        spread: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let tau2 = plug_in_tau2(prob, prior)?;
        let (mean, cov) = crate::posterior::conditional_theta_posterior(prob, prior, tau2)?;
        let theta = DVector::from_fn(mean.len(), |k, _| {
            let z: f64 = StandardNormal.sample(rng);
            mean[k] + spread * libm::sqrt(cov[(k, k)]) * z
        });
        let z: f64 = StandardNormal.sample(rng);
        let tau2 = tau2 * libm::exp(spread * 0.5 * z);
        Self::new(theta, tau2, prob, prior, with_grad)
    }

    pub fn is_consistent(&self, prob: &RegressionProblem, prior: &PriorSpec) -> bool {
        let lp = log_posterior_unchecked(&self.theta, self.tau2, prob, prior);
        (lp - self.log_post).abs() <= 1e-9 * lp.abs().max(1.0)
    }
}

/// Residual variance of the least-squares-like ridge fit, floored.
fn plug_in_tau2(prob: &RegressionProblem, prior: &PriorSpec) -> Result<f64> {
    let theta = ridge_mode(prob, prior, 1.0)?;
    let dof = prob.n_obs().saturating_sub(prob.dim()).max(1) as f64;
    Ok((prob.ssr(&theta) / dof).max(1e-6))
}

/// Result of one kernel application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    /// `min(1, exp(log α))`, 0 for non-finite proposals.
    pub accept_prob: f64,
    /// Set when the proposal or its gradient was non-finite.
    pub flagged: bool,
}

#[inline]
fn standard_normal_vec<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

#[inline]
fn accept<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> (bool, f64) {
    if !log_alpha.is_finite() {
        // NaN or -inf: reject; +inf cannot arise from finite states
        return (false, 0.0);
    }
    let prob = if log_alpha >= 0.0 { 1.0 } else { libm::exp(log_alpha) };
    let u: f64 = rng.random();
    (u < prob, prob)
}

/// One random-walk Metropolis step.
pub fn rwm_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    spec: &ProposalSpec,
    prob: &RegressionProblem,
    prior: &PriorSpec,
    rng: &mut R,
) -> StepOutcome {
    state.iteration += 1;
    let chol = spec.chol.as_ref().expect("random-walk proposal without covariance");
    let xi = standard_normal_vec(state.theta.len(), rng);
    let theta_new = &state.theta + chol * xi * spec.scale;
    let (tau2_new, log_jacobian) = match spec.tau_update {
        TauUpdate::JointRandomWalk(eta) => {
            let z: f64 = StandardNormal.sample(rng);
            let log_new = libm::log(state.tau2) + eta * z;
            (libm::exp(log_new), log_new - libm::log(state.tau2))
        }
        // separate τ² moves follow in `step`
        _ => (state.tau2, 0.0),
    };
    if !(tau2_new > 0.0 && tau2_new.is_finite()) || theta_new.iter().any(|v| !v.is_finite()) {
        let _: f64 = rng.random();
        return StepOutcome {
            accepted: false,
            accept_prob: 0.0,
            flagged: true,
        };
    }
    let lp_new = log_posterior_unchecked(&theta_new, tau2_new, prob, prior);
    let (accepted, accept_prob) = accept(lp_new - state.log_post + log_jacobian, rng);
    if accepted {
        state.theta = theta_new;
        state.tau2 = tau2_new;
        state.log_post = lp_new;
    }
    StepOutcome {
        accepted,
        accept_prob,
        flagged: !lp_new.is_finite(),
    }
}

/// Replaces τ² by a Gibbs draw and refreshes the cached values.
pub fn refresh_tau2<R: Rng + ?Sized>(
    state: &mut ChainState,
    prob: &RegressionProblem,
    prior: &PriorSpec,
    rng: &mut R,
) {
    state.tau2 = gibbs_tau2(&state.theta, prob, prior, rng);
    state.log_post = log_posterior_unchecked(&state.theta, state.tau2, prob, prior);
    if state.grad.is_some() {
        state.grad = Some(grad_unchecked(&state.theta, state.tau2, prob, prior));
    }
}

/// Exact draw of `τ² | θ ~ IG(v1 + n/2, v2 + SSR(θ)/2)`.
pub fn gibbs_tau2<R: Rng + ?Sized>(
    theta: &DVector<f64>,
    prob: &RegressionProblem,
    prior: &PriorSpec,
    rng: &mut R,
) -> f64 {
    let shape = prior.ig_shape + 0.5 * prob.n_obs() as f64;
    let scale = prior.ig_scale + 0.5 * prob.ssr(theta);
    draw_inverse_gamma(shape, scale, rng)
}

/// `IG(shape, scale)` as the reciprocal of `Gamma(shape, rate = scale)`.
pub fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / scale)
        .expect("inverse-gamma parameters are positive")
        .sample(rng);
    1.0 / g
}

/// One MALA step on θ followed by a Gibbs refresh of τ².
pub fn mala_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    spec: &ProposalSpec,
    prob: &RegressionProblem,
    prior: &PriorSpec,
    rng: &mut R,
) -> StepOutcome {
    let outcome = mala_theta_step(state, spec, prob, prior, rng, None);
    match spec.tau_update {
        TauUpdate::Gibbs => refresh_tau2(state, prob, prior, rng),
        TauUpdate::RandomWalk(eta) => {
            tau_random_walk_step(state, eta, prob, prior, rng);
        }
        TauUpdate::Fixed | TauUpdate::JointRandomWalk(_) => {}
    }
    outcome
}

/// Metropolis step on `log τ²` alone at fixed θ. Returns whether it moved.
pub fn tau_random_walk_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    eta: f64,
    prob: &RegressionProblem,
    prior: &PriorSpec,
    rng: &mut R,
) -> bool {
    let z: f64 = StandardNormal.sample(rng);
    let tau2_new = state.tau2 * libm::exp(eta * z);
    if !(tau2_new > 0.0 && tau2_new.is_finite()) {
        let _: f64 = rng.random();
        return false;
    }
    let lp_new = log_posterior_unchecked(&state.theta, tau2_new, prob, prior);
    let (accepted, _) = accept(lp_new - state.log_post + eta * z, rng);
    if accepted {
        state.tau2 = tau2_new;
        state.log_post = lp_new;
        if state.grad.is_some() {
            state.grad = Some(grad_unchecked(&state.theta, tau2_new, prob, prior));
        }
    }
    accepted
}

/// The Langevin move on θ at fixed τ². `noise` overrides the standard normal
/// innovation (used to pin the proposal in tests).
pub fn mala_theta_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    spec: &ProposalSpec,
    prob: &RegressionProblem,
    prior: &PriorSpec,
    rng: &mut R,
    noise: Option<&DVector<f64>>,
) -> StepOutcome {
    state.iteration += 1;
    let h = spec.mala_step * spec.scale;
    let half_h2 = 0.5 * h * h;
    let grad = match &state.grad {
        Some(g) => g.clone(),
        None => grad_unchecked(&state.theta, state.tau2, prob, prior),
    };
    let xi = match noise {
        Some(n) => n.clone(),
        None => standard_normal_vec(state.theta.len(), rng),
    };
    let mean_fwd = &state.theta + &grad * half_h2;
    let theta_new = &mean_fwd + xi * h;
    let reject = |state: &mut ChainState, rng: &mut R| {
        state.grad = Some(grad.clone());
        let _: f64 = rng.random();
        StepOutcome {
            accepted: false,
            accept_prob: 0.0,
            flagged: true,
        }
    };
    if theta_new.iter().any(|v| !v.is_finite()) {
        return reject(state, rng);
    }
    let grad_new = grad_unchecked(&theta_new, state.tau2, prob, prior);
    if grad_new.iter().any(|v| !v.is_finite()) {
        return reject(state, rng);
    }
    let lp_new = log_posterior_unchecked(&theta_new, state.tau2, prob, prior);
    let mean_rev = &theta_new + &grad_new * half_h2;
    let log_q_fwd = -(&theta_new - &mean_fwd).norm_squared() / (2.0 * h * h);
    let log_q_rev = -(&state.theta - &mean_rev).norm_squared() / (2.0 * h * h);
    let log_alpha = lp_new - state.log_post + log_q_rev - log_q_fwd;
    let (accepted, accept_prob) = accept(log_alpha, rng);
    if accepted {
        state.theta = theta_new;
        state.log_post = lp_new;
        state.grad = Some(grad_new);
    } else {
        state.grad = Some(grad);
    }
    StepOutcome {
        accepted,
        accept_prob,
        flagged: !lp_new.is_finite(),
    }
}

/// Applies the kernel matching `spec.kind`.
pub fn step<R: Rng + ?Sized>(
    state: &mut ChainState,
    spec: &ProposalSpec,
    prob: &RegressionProblem,
    prior: &PriorSpec,
    rng: &mut R,
) -> StepOutcome {
    match spec.kind {
        SamplerKind::Mala => mala_step(state, spec, prob, prior, rng),
        _ => {
            let out = rwm_step(state, spec, prob, prior, rng);
            match spec.tau_update {
                TauUpdate::Gibbs => refresh_tau2(state, prob, prior, rng),
                TauUpdate::RandomWalk(eta) => {
                    tau_random_walk_step(state, eta, prob, prior, rng);
                }
                _ => {}
            }
            out
        }
    }
}

/// Length and adaptation settings for one chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    /// Total iterations including burn-in.
    pub iterations: usize,
    /// Fraction of iterations discarded as burn-in.
    pub burn_in: f64,
    /// Adapt the scale multiplier during burn-in.
    pub adapt: bool,
    /// Store post-burn-in draws (otherwise only the final state is kept).
    pub keep_draws: bool,
}

impl ChainConfig {
    pub fn new(iterations: usize, burn_in: f64) -> Self {
        Self {
            iterations,
            burn_in,
            adapt: true,
            keep_draws: true,
        }
    }

    pub fn burn_in_iterations(&self) -> usize {
        libm::floor(self.burn_in * self.iterations as f64) as usize
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(invalid("burn_in", "must lie in [0, 1)"));
        }
        if self.iterations < 10 {
            return Err(invalid("iterations", "need at least 10"));
        }
        Ok(())
    }
}

/// Post-burn-in draws of one chain, row-major `(θ_1..θ_d, τ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub kind: SamplerKind,
    pub dim: usize,
    pub burn_in: f64,
    pub seed: u64,
    /// Iteration index of the first stored draw (1-based).
    pub first_iteration: usize,
    values: Vec<f64>,
    log_post: Vec<f64>,
    accepted: Vec<bool>,
    /// θ proposals accepted after burn-in.
    pub theta_accepted: usize,
    /// τ² moves accepted after burn-in (every Gibbs draw counts).
    pub tau_accepted: usize,
    /// Post-burn-in iterations run.
    pub proposals: usize,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.log_post.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_post.is_empty()
    }

    /// `(θ, τ²)` of draw `s`; the last entry is τ².
    pub fn draw(&self, s: usize) -> &[f64] {
        let w = self.dim + 1;
        &self.values[s * w..(s + 1) * w]
    }

    pub fn theta(&self, s: usize) -> &[f64] {
        &self.draw(s)[..self.dim]
    }

    pub fn tau2(&self, s: usize) -> f64 {
        self.draw(s)[self.dim]
    }

    pub fn log_post(&self, s: usize) -> f64 {
        self.log_post[s]
    }

    pub fn accepted(&self, s: usize) -> bool {
        self.accepted[s]
    }

    /// Column `k` across draws; `k == dim` is τ².
    pub fn parameter(&self, k: usize) -> Vec<f64> {
        (0..self.len()).map(|s| self.draw(s)[k]).collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.theta_accepted as f64 / self.proposals as f64
        }
    }

    pub fn tau_acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.tau_accepted as f64 / self.proposals as f64
        }
    }
}

/// Draws plus the state and proposal needed to warm-start a later run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub draws: PosteriorDraws,
    pub state: ChainState,
    pub spec: ProposalSpec,
}

/// Runs one chain. During burn-in the scale multiplier is adapted (when
/// enabled); it is then frozen at its geometric mean over the second half of
/// burn-in. Fails if 1000 consecutive proposals are
/// rejected.
pub fn run_chain<R: Rng + ?Sized>(
    mut spec: ProposalSpec,
    prob: &RegressionProblem,
    prior: &PriorSpec,
    init: ChainState,
    cfg: &ChainConfig,
    seed: u64,
    rng: &mut R,
) -> Result<ChainOutput> {
    cfg.validate()?;
    prior.validate()?;
    let d = prob.dim();
    if init.theta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: init.theta.len(),
        });
    }
    let mut state = init;
    if spec.kind == SamplerKind::Mala && state.grad.is_none() {
        state.grad = Some(grad_unchecked(&state.theta, state.tau2, prob, prior));
    }
    let burn = cfg.burn_in_iterations();
    let kept = if cfg.keep_draws { cfg.iterations - burn } else { 0 };
    let mut draws = PosteriorDraws {
        kind: spec.kind,
        dim: d,
        burn_in: cfg.burn_in,
        seed,
        first_iteration: burn + 1,
        values: Vec::with_capacity(kept * (d + 1)),
        log_post: Vec::with_capacity(kept),
        accepted: Vec::with_capacity(kept),
        theta_accepted: 0,
        tau_accepted: 0,
        proposals: 0,
    };
    let mut rejected_run = 0usize;
    // the frozen scale is the geometric mean over the second half of burn-in
    let mut log_scale_sum = 0.0;
    let mut log_scale_count = 0usize;
    for i in 0..cfg.iterations {
        let tau_before = state.tau2;
        let out = step(&mut state, &spec, prob, prior, rng);
        if out.accepted {
            rejected_run = 0;
        } else {
            rejected_run += 1;
            if rejected_run >= STALL_LIMIT {
                return Err(Error::SamplerStalled {
                    consecutive: rejected_run,
                });
            }
        }
        if i < burn {
            if cfg.adapt {
                spec.adapt(out.accept_prob);
                if 2 * i >= burn {
                    log_scale_sum += libm::log(spec.scale);
                    log_scale_count += 1;
                }
                if i + 1 == burn && log_scale_count > 0 {
                    spec.scale = libm::exp(log_scale_sum / log_scale_count as f64);
                }
            }
            continue;
        }
        draws.proposals += 1;
        if out.accepted {
            draws.theta_accepted += 1;
        }
        if spec.tau_update == TauUpdate::Gibbs || state.tau2 != tau_before {
            draws.tau_accepted += 1;
        }
        if cfg.keep_draws {
            draws.values.extend(state.theta.iter());
            draws.values.push(state.tau2);
            draws.log_post.push(state.log_post);
            draws.accepted.push(out.accepted);
        }
    }
    Ok(ChainOutput { draws, state, spec })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn standard_normal_target() -> (RegressionProblem, PriorSpec) {
        // one uninformative observation: the posterior in θ equals the prior
        let prob = RegressionProblem::new(DMatrix::zeros(1, 1), DVector::zeros(1)).unwrap();
        let prior = PriorSpec {
            theta_var: 1.0,
            ..PriorSpec::default()
        };
        (prob, prior)
    }

    #[test]
    fn scaled_identity_fallback() {
        let rows = DMatrix::from_element(3, 2, 1.0);
        let cov = rwm_proposal_cov(&rows, PROPOSAL_RIDGE).unwrap();
        assert!((cov[(0, 0)] - 2.8322).abs() < 1e-12);
        assert_eq!(cov[(0, 1)], 0.0);
        assert!(rwm_proposal_cov(&DMatrix::zeros(0, 2), PROPOSAL_RIDGE).is_err());
    }

    #[test]
    fn constant_column_stays_positive_definite() {
        let mut rng = seeded(1);
        let rows = DMatrix::from_fn(50, 3, |_, k| {
            if k == 0 {
                1.0
            } else {
                StandardNormal.sample(&mut rng)
            }
        });
        let cov = rwm_proposal_cov(&rows, PROPOSAL_RIDGE).unwrap();
        assert!(cov.clone().cholesky().is_some());
        let mean_var = (cov[(1, 1)] + cov[(2, 2)]) / 2.0;
        assert!((cov[(0, 0)] - mean_var).abs() < 1e-12);
        assert_eq!((cov[(0, 1)], cov[(0, 2)]), (0.0, 0.0));
        let all_flat = rwm_proposal_cov(&DMatrix::from_element(20, 2, 3.0), 0.0).unwrap();
        assert_eq!(all_flat, DMatrix::identity(2, 2) * (RWM_SCALE * RWM_SCALE / 2.0));
    }

    #[test]
    fn precision_proposal_inverts_gram() {
        let gram = DMatrix::from_row_slice(2, 2, &[200.0, 180.0, 180.0, 200.0]);
        let cov = rwm_precision_cov(&gram, 200, 0.0).unwrap();
        let back = &gram * &cov / (200.0 * RWM_SCALE * RWM_SCALE / 2.0);
        assert!((back - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-12);
        assert_eq!(
            rwm_precision_cov(&gram, 5, 0.0).unwrap(),
            DMatrix::identity(2, 2) * (RWM_SCALE * RWM_SCALE / 2.0)
        );
    }

    #[test]
    fn mala_step_sizes() {
        assert!((mala_step_size(1) - 2.7225).abs() < 1e-12);
        assert!((mala_step_size(8) - 1.36125).abs() < 1e-12);
        for d in 1..50 {
            assert!(mala_step_size(d + 1) < mala_step_size(d));
        }
    }

    #[test]
    fn tiny_rwm_steps_are_accepted() {
        let (prob, prior) = standard_normal_target();
        let mut spec = ProposalSpec::rwm_with_cov(SamplerKind::RwmIdentity, &DMatrix::identity(1, 1), TauUpdate::Fixed).unwrap();
        spec.scale = 1e-9;
        let mut state = ChainState::new(DVector::from_element(1, 0.3), 1.0, &prob, &prior, false).unwrap();
        let mut rng = seeded(2);
        for _ in 0..100 {
            let out = rwm_step(&mut state, &spec, &prob, &prior, &mut rng);
            assert!(out.accept_prob > 0.999_999);
        }
    }

    #[test]
    fn rwm_acceptance_on_standard_normal() {
        let (prob, prior) = standard_normal_target();
        let mut spec = ProposalSpec::rwm_with_cov(SamplerKind::RwmIdentity, &DMatrix::identity(1, 1), TauUpdate::Fixed).unwrap();
        spec.scale = 2.38;
        let mut state = ChainState::new(DVector::zeros(1), 1.0, &prob, &prior, false).unwrap();
        let mut rng = seeded(3);
        let accepted = (0..10_000)
            .filter(|_| rwm_step(&mut state, &spec, &prob, &prior, &mut rng).accepted)
            .count();
        let rate = accepted as f64 / 10_000.0;
        assert!((0.30..=0.55).contains(&rate), "{rate}");
    }

    #[test]
    fn steps_are_deterministic_and_rejections_exact() {
        let (prob, prior) = standard_normal_target();
        let mut spec = ProposalSpec::rwm_with_cov(SamplerKind::RwmIdentity, &DMatrix::identity(1, 1), TauUpdate::JointRandomWalk(0.3)).unwrap();
        spec.scale = 5.0;
        let start = ChainState::new(DVector::from_element(1, 0.1), 1.0, &prob, &prior, false).unwrap();
        let (mut a, mut b) = (start.clone(), start.clone());
        let (mut ra, mut rb) = (seeded(4), seeded(4));
        for _ in 0..200 {
            let before = a.clone();
            let out = rwm_step(&mut a, &spec, &prob, &prior, &mut ra);
            rwm_step(&mut b, &spec, &prob, &prior, &mut rb);
            assert_eq!(a, b);
            if !out.accepted {
                assert_eq!(a.theta, before.theta);
                assert_eq!(a.tau2.to_bits(), before.tau2.to_bits());
            }
            assert!(a.is_consistent(&prob, &prior));
        }
    }

    #[test]
    fn mala_fixed_point_at_mode() {
        let mut rng = seeded(5);
        let z = DMatrix::from_fn(30, 2, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(30, |_, _| StandardNormal.sample(&mut rng));
        let prob = RegressionProblem::new(z, y).unwrap();
        let prior = PriorSpec::default();
        let tau2 = 0.5;
        let mode = ridge_mode(&prob, &prior, tau2).unwrap();
        let mut state = ChainState::new(mode.clone(), tau2, &prob, &prior, true).unwrap();
        let spec = ProposalSpec::mala(2, MalaConvention::AsPrinted);
        let out = mala_theta_step(&mut state, &spec, &prob, &prior, &mut rng, Some(&DVector::zeros(2)));
        assert!(out.accepted);
        assert!((&state.theta - &mode).amax() < 1e-10);
    }

    #[test]
    fn small_mala_steps_are_accepted() {
        let (prob, prior) = standard_normal_target();
        let mut spec = ProposalSpec::mala(1, MalaConvention::AsPrinted);
        spec.scale = 1e-4;
        let mut state = ChainState::new(DVector::from_element(1, 1.0), 1.0, &prob, &prior, true).unwrap();
        let mut rng = seeded(6);
        for _ in 0..200 {
            let out = mala_theta_step(&mut state, &spec, &prob, &prior, &mut rng, None);
            assert!(out.accept_prob > 0.9999);
        }
    }

    #[test]
    fn gibbs_tau2_mean() {
        // IG(2 + 4/2, 1 + 2/2) = IG(4, 2): mean 2/3, variance (2/3)^2 / 2
        let z = DMatrix::from_element(4, 1, 0.0);
        let y = DVector::from_vec(alloc::vec![1.0, -1.0, 0.0, 0.0]);
        let prob = RegressionProblem::new(z, y).unwrap();
        let prior = PriorSpec::default();
        let theta = DVector::zeros(1);
        assert_eq!(prob.ssr(&theta), 2.0);
        let mut rng = seeded(7);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| gibbs_tau2(&theta, &prob, &prior, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let se = libm::sqrt((4.0 / 9.0) / 2.0 / n as f64);
        assert!((mean - 2.0 / 3.0).abs() < 3.0 * se, "{mean}");
        let mut r1 = seeded(8);
        let mut r2 = seeded(8);
        assert_eq!(
            gibbs_tau2(&theta, &prob, &prior, &mut r1),
            gibbs_tau2(&theta, &prob, &prior, &mut r2)
        );
    }

    #[test]
    fn gibbs_tau2_zero_residual_limit() {
        let prior = PriorSpec::default();
        let n = 2000;
        let prob = RegressionProblem::new(DMatrix::zeros(n, 1), DVector::zeros(n)).unwrap();
        let mut rng = seeded(9);
        let theta = DVector::zeros(1);
        let mode = prior.ig_scale / (prior.ig_shape + n as f64 / 2.0 + 1.0);
        let mean = (0..2000).map(|_| gibbs_tau2(&theta, &prob, &prior, &mut rng)).sum::<f64>() / 2000.0;
        assert!((mean / mode - 1.0).abs() < 0.01, "{mean} vs {mode}");
    }

    #[test]
    fn burn_in_cut() {
        let (prob, prior) = standard_normal_target();
        let spec = ProposalSpec::rwm_with_cov(SamplerKind::RwmIdentity, &DMatrix::identity(1, 1), TauUpdate::Fixed).unwrap();
        let init = ChainState::new(DVector::zeros(1), 1.0, &prob, &prior, false).unwrap();
        let out = run_chain(spec, &prob, &prior, init, &ChainConfig::new(1000, 0.2), 0, &mut seeded(10)).unwrap();
        assert_eq!(out.draws.len(), 800);
        assert_eq!(out.draws.proposals, 800);
        assert_eq!(out.draws.first_iteration, 201);
        assert!((0.0..=1.0).contains(&out.draws.acceptance_rate()));
        assert!((0..800).all(|s| out.draws.tau2(s) > 0.0));
    }

    #[test]
    fn stalled_chain_is_an_error() {
        let (prob, prior) = standard_normal_target();
        let mut spec = ProposalSpec::rwm_with_cov(SamplerKind::RwmIdentity, &DMatrix::identity(1, 1), TauUpdate::Fixed).unwrap();
        spec.scale = 1e12;
        let init = ChainState::new(DVector::zeros(1), 1.0, &prob, &prior, false).unwrap();
        let mut cfg = ChainConfig::new(3000, 0.0);
        cfg.adapt = false;
        let err = run_chain(spec, &prob, &prior, init, &cfg, 0, &mut seeded(11)).unwrap_err();
        assert_eq!(err, Error::SamplerStalled { consecutive: STALL_LIMIT });
    }

    #[test]
    fn rejects_bad_config() {
        let (prob, prior) = standard_normal_target();
        let spec = ProposalSpec::mala(1, MalaConvention::AsPrinted);
        let init = ChainState::new(DVector::zeros(1), 1.0, &prob, &prior, true).unwrap();
        assert!(run_chain(spec, &prob, &prior, init, &ChainConfig::new(100, 1.0), 0, &mut seeded(1)).is_err());
    }
}
