//! Bayesian time-lagged MICE: each conditional regression is sampled by RWM
//! or MALA, and missing cells are drawn from the posterior predictive.
//!
//! Each (variable, sweep) runs a short warm-started chain; the last sweep
//! runs the full-length multi-chain sampler whose draws feed the per-cell
//! predictive summaries and the convergence diagnostics.

use alloc::vec::Vec;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::TimeSeriesDataset;
use crate::design::{build_lagged_design, Initialization, LagOrder, TimeFeatureSpec};
use crate::error::{invalid, Error, Result};
use crate::imputation::{config_hash, pool_imputations, ImputationResult, Prepared, SingleImputation, VariableChains};
use crate::metrics::{score, MetricsReport};
use crate::missingness::GroundTruthMask;
use crate::posterior::{PriorSpec, RegressionProblem};
use crate::rng::stream;
use crate::samplers::{run_chain, ChainConfig, ChainState, MalaConvention, PosteriorDraws, ProposalSpec, SamplerKind};

/// Retained draws per chain used for the per-cell predictive moments.
pub const PREDICTIVE_DRAWS: usize = 1000;
/// Spread, in conditional posterior SDs, of the extra chains' starting points.
pub const OVERDISPERSION: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TbmConfig {
    pub sampler: SamplerKind,
    pub mala_convention: MalaConvention,
    /// Chains of the final long run.
    pub chains: usize,
    /// Iterations `S` of each final chain, burn-in included.
    pub iterations: usize,
    pub burn_in: f64,
    /// Iterations of the warm-started chain in each earlier (variable, sweep).
    pub inner_draws: usize,
    /// Sweeps `K`.
    pub sweeps: usize,
    /// Imputations `m`.
    pub imputations: usize,
    pub lags: LagOrder,
    pub init: Initialization,
    pub time_features: TimeFeatureSpec,
    pub prior: PriorSpec,
    pub adapt: bool,
    /// Starting proposal scale multiplier (1 = the sampler's default).
    pub initial_scale: f64,
    pub seed: u64,
    /// Keep the final chains in the result (for diagnostics and traces).
    pub keep_chains: bool,
}

impl Default for TbmConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerKind::RwmEmpirical,
            mala_convention: MalaConvention::AsPrinted,
            chains: 2,
            iterations: 5000,
            burn_in: 0.2,
            inner_draws: 300,
            sweeps: 10,
            imputations: 5,
            lags: LagOrder::symmetric(1),
            init: Initialization::Mean,
            time_features: TimeFeatureSpec::none(),
            prior: PriorSpec::default(),
            adapt: true,
            initial_scale: 1.0,
            seed: 0,
            keep_chains: false,
        }
    }
}

impl TbmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("chains", self.chains),
            ("sweeps", self.sweeps),
            ("imputations", self.imputations),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        if self.iterations < 10 || self.inner_draws < 10 {
            return Err(invalid("iterations", "need at least 10"));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(invalid("burn_in", "must lie in [0, 1)"));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(invalid("initial_scale", "must be positive and finite"));
        }
        self.prior.validate()
    }

    /// Seed of imputation `r` (1-based).
    pub fn imputation_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }

    pub fn method_name(&self) -> &'static str {
        if self.sampler == SamplerKind::Mala {
            "tbayes-mala"
        } else {
            "tbayes-rwm"
        }
    }

    pub fn hash(&self) -> u64 {
        config_hash(&alloc::format!("{self:?}"))
    }
}

/// A draw from `N(zᵀθ, τ²)`.
pub fn impute_posterior_predictive<R: Rng + ?Sized>(theta: &[f64], tau2: f64, z: &[f64], rng: &mut R) -> Result<f64> {
    if theta.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            found: z.len(),
        });
    }
    if !(tau2 >= 0.0) || !tau2.is_finite() || theta.iter().chain(z).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("posterior predictive inputs"));
    }
    let mean: f64 = theta.iter().zip(z).map(|(a, b)| a * b).sum();
    let xi: f64 = StandardNormal.sample(rng);
    Ok(mean + libm::sqrt(tau2) * xi)
}

/// Sampler state carried from one sweep to the next for one variable.
#[derive(Debug, Clone)]
struct Carry {
    theta: DVector<f64>,
    tau2: f64,
    scale: f64,
    adapt_steps: usize,
}

fn fresh_spec(cfg: &TbmConfig, prob: &RegressionProblem, carry: Option<&Carry>) -> Result<ProposalSpec> {
    let mut spec = ProposalSpec::for_problem(cfg.sampler, prob, cfg.mala_convention)?;
    spec.scale = cfg.initial_scale;
    if let Some(c) = carry {
        spec.scale = c.scale;
        spec.adapt_steps = c.adapt_steps;
    }
    Ok(spec)
}

fn wrap(column: usize, sweep: usize) -> impl Fn(Error) -> Error {
    move |e| Error::SamplerContext {
        column,
        sweep,
        source: alloc::boxed::Box::new(e),
    }
}

/// Per-cell predictive mean and variance from retained draws (law of total
/// variance over at most [`PREDICTIVE_DRAWS`] evenly thinned draws per chain).
fn predictive_moments(chains: &[PosteriorDraws], z: &[f64]) -> (f64, f64) {
    let mut mus = Vec::new();
    let mut tau_sum = 0.0;
    for c in chains {
        let step = (c.len() / PREDICTIVE_DRAWS).max(1);
        for s in (0..c.len()).step_by(step) {
            mus.push(c.theta(s).iter().zip(z).map(|(a, b)| a * b).sum::<f64>());
            tau_sum += c.tau2(s);
        }
    }
    let k = mus.len() as f64;
    let mean = mus.iter().sum::<f64>() / k;
    let var_mu = mus.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / k;
    (mean, tau_sum / k + var_mu)
}

/// One imputation (`r` is 1-based).
pub fn impute_once(prep: &Prepared, cfg: &TbmConfig, r: usize) -> Result<SingleImputation> {
    cfg.validate()?;
    let seed = cfg.imputation_seed(r);
    let ds = &prep.standardized;
    let mut x = cfg.init.apply(ds)?;
    let mut carry: Vec<Option<Carry>> = alloc::vec![None; ds.ncols()];
    let mut final_chains: Vec<VariableChains> = Vec::new();
    let mut moments: Vec<Option<(f64, f64)>> = alloc::vec![None; prep.cells.len()];
    let with_grad = cfg.sampler == SamplerKind::Mala;
    for k in 1..=cfg.sweeps {
        let last = k == cfg.sweeps;
        for &j in &prep.missing_cols {
            let ctx = wrap(j, k);
            let design = build_lagged_design(&x, j, cfg.lags, &prep.time_features)?;
            let prob = RegressionProblem::from_design(&design, &x, &ds.mask().observed_rows(j))?;
            let warm = match &carry[j] {
                Some(c) => ChainState::new(c.theta.clone(), c.tau2, &prob, &cfg.prior, with_grad)?,
                None => ChainState::at_mode(&prob, &cfg.prior, with_grad)?,
            };
            let spec = fresh_spec(cfg, &prob, carry[j].as_ref())?;
            let (theta, tau2, spec_out) = if last {
                let chain_cfg = ChainConfig {
                    iterations: cfg.iterations,
                    burn_in: cfg.burn_in,
                    adapt: cfg.adapt,
                    keep_draws: true,
                };
                let mut outs = Vec::with_capacity(cfg.chains);
                for c in 0..cfg.chains {
                    let chain_seed = crate::rng::derive_seed(seed, &[j as u64, k as u64, c as u64]);
                    let mut rng = crate::rng::seeded(chain_seed);
                    let init = if c == 0 {
                        warm.clone()
                    } else {
                        ChainState::overdispersed(&prob, &cfg.prior, with_grad, OVERDISPERSION, &mut rng)?
                    };
                    outs.push(run_chain(spec.clone(), &prob, &cfg.prior, init, &chain_cfg, chain_seed, &mut rng).map_err(&ctx)?);
                }
                let draws: Vec<PosteriorDraws> = outs.iter().map(|o| o.draws.clone()).collect();
                let sd = prep.params.sds[j];
                for (i, &(t, col)) in prep.cells.iter().enumerate() {
                    if col == j {
                        let (m, v) = predictive_moments(&draws, &design.row(t));
                        moments[i] = Some((prep.params.inverse(j, m), v * sd * sd));
                    }
                }
                if cfg.keep_chains {
                    final_chains.push(VariableChains {
                        column: j,
                        labels: design.labels(ds.names()),
                        chains: draws,
                    });
                }
                let first = outs.swap_remove(0);
                (first.state.theta, first.state.tau2, first.spec)
            } else {
                let chain_cfg = ChainConfig {
                    iterations: cfg.inner_draws,
                    burn_in: cfg.burn_in,
                    adapt: cfg.adapt,
                    keep_draws: false,
                };
                let chain_seed = crate::rng::derive_seed(seed, &[j as u64, k as u64]);
                let mut rng = crate::rng::seeded(chain_seed);
                let out = run_chain(spec, &prob, &cfg.prior, warm, &chain_cfg, chain_seed, &mut rng).map_err(&ctx)?;
                (out.state.theta, out.state.tau2, out.spec)
            };
            let mut rng = stream(seed, &[j as u64, k as u64, 0x494d_5055]);
            for t in ds.mask().missing_rows(j) {
                x[(t, j)] = impute_posterior_predictive(theta.as_slice(), tau2, &design.row(t), &mut rng)?;
            }
            carry[j] = Some(Carry {
                theta,
                tau2,
                scale: spec_out.scale,
                adapt_steps: spec_out.adapt_steps,
            });
        }
    }
    prep.params.inverse_matrix(&mut x);
    let (predictive_mean, predictive_var) = moments
        .into_iter()
        .map(|m| m.expect("every missing cell is visited in the last sweep"))
        .unzip();
    Ok(SingleImputation {
        completed: x,
        predictive_mean,
        predictive_var,
        seed,
        chains: final_chains,
    })
}

/// Runs `m` imputations sequentially.
pub fn run_tbayes_mice(ds: &TimeSeriesDataset, cfg: &TbmConfig) -> Result<ImputationResult> {
    cfg.validate()?;
    let prep = Prepared::new(ds, &cfg.time_features)?;
    let sampler = cfg.sampler.name();
    let seeds: Vec<u64> = (1..=cfg.imputations).map(|r| cfg.imputation_seed(r)).collect();
    if prep.is_complete() {
        return ImputationResult::passthrough(&prep, cfg.method_name(), sampler, cfg.hash(), seeds);
    }
    let runs = (1..=cfg.imputations)
        .map(|r| impute_once(&prep, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    ImputationResult::assemble(&prep, cfg.method_name(), sampler, cfg.hash(), runs)
}

/// Both initialization variants (`-v1` mean, `-v2` time-aware) on the same
/// masked data and seeds, each scored on its pooled dataset.
pub fn run_ablation(
    masked: &TimeSeriesDataset,
    truth: &GroundTruthMask,
    cfg: &TbmConfig,
) -> Result<(MetricsReport, MetricsReport)> {
    let mut out = Vec::with_capacity(2);
    for (suffix, init) in [("v1", Initialization::Mean), ("v2", Initialization::TimeAware { period: None })] {
        let variant = TbmConfig { init, ..cfg.clone() };
        let result = run_tbayes_mice(masked, &variant)?;
        let pooled = pool_imputations(&result)?;
        let name = alloc::format!("{}-{suffix}", cfg.method_name());
        out.push(score(&pooled.dataset, truth, &name, cfg.sampler.name())?);
    }
    let v2 = out.pop().expect("two variants");
    let v1 = out.pop().expect("two variants");
    Ok((v1, v2))
}
