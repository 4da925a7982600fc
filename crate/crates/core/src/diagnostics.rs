//! Convergence diagnostics: split R̂, rank-normalized bulk ESS, shortest
//! highest-density intervals and per-parameter summaries.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::posterior::RegressionProblem;
use crate::samplers::PosteriorDraws;

/// R̂ threshold below which a parameter counts as converged.
pub const RHAT_THRESHOLD: f64 = 1.05;
/// Bulk-ESS threshold above which a parameter counts as converged.
pub const ESS_THRESHOLD: f64 = 400.0;
/// Default HDI mass.
pub const HDI_MASS: f64 = 0.94;

/// A diagnostic value, or a marker that it is undefined because the draws
/// have zero variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimate {
    Value(f64),
    Degenerate,
}

impl Estimate {
    pub fn value(self) -> Option<f64> {
        match self {
            Estimate::Value(v) => Some(v),
            Estimate::Degenerate => None,
        }
    }

    pub fn is_degenerate(self) -> bool {
        matches!(self, Estimate::Degenerate)
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimate::Value(v) => write!(f, "{v}"),
            Estimate::Degenerate => f.write_str("degenerate"),
        }
    }
}

fn check_chains(chains: &[&[f64]]) -> Result<usize> {
    if chains.is_empty() {
        return Err(Error::Empty);
    }
    let s = chains[0].len();
    if let Some(c) = chains.iter().find(|c| c.len() != s) {
        return Err(Error::DimensionMismatch {
            expected: s,
            found: c.len(),
        });
    }
    if s < 4 {
        return Err(Error::InsufficientSamples { have: s, need: 4 });
    }
    Ok(s)
}

/// Splits each chain into its first and last `⌊S/2⌋` draws.
fn split_halves<'a>(chains: &[&'a [f64]]) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(&c[..half]);
        out.push(&c[c.len() - half..]);
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split R̂: `√(V̂/W)` over the `2C` half-chains, with `W` the mean
/// within-half variance and `V̂ = ((n−1)/n)·W + B/n`.
pub fn split_rhat(chains: &[&[f64]]) -> Result<Estimate> {
    check_chains(chains)?;
    let halves = split_halves(chains);
    let n = halves[0].len() as f64;
    let w = halves.iter().map(|h| sample_var(h)).sum::<f64>() / halves.len() as f64;
    if !(w > 0.0) {
        return Ok(Estimate::Degenerate);
    }
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let b = n * sample_var(&means);
    let v_hat = (n - 1.0) / n * w + b / n;
    Ok(Estimate::Value(libm::sqrt(v_hat / w)))
}

/// Inverse of the standard normal CDF (Wichura's AS 241, ~1e-16 relative).
#[allow(clippy::excessive_precision)] // published coefficients, kept verbatim
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = libm::sqrt(-libm::log(r));
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Pooled ranks (average ranks for ties) mapped through
/// `Φ⁻¹((r − 3/8)/(N + 1/4))`.
pub fn rank_normalize(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut idx: Vec<(f64, usize)> = chains
        .iter()
        .flat_map(|c| c.iter().copied())
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut z = alloc::vec![0.0; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && idx[j + 1].0 == idx[i].0 {
            j += 1;
        }
        // 1-based average rank of the tie block
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let value = normal_quantile((rank - 0.375) / (total as f64 + 0.25));
        for item in &idx[i..=j] {
            z[item.1] = value;
        }
        i = j + 1;
    }
    let mut out = Vec::with_capacity(chains.len());
    let mut offset = 0;
    for c in chains {
        out.push(z[offset..offset + c.len()].to_vec());
        offset += c.len();
    }
    out
}

/// Lag-`lag` autocovariance (divisor `n`) of a centered chain.
fn autocov(centered: &[f64], lag: usize) -> f64 {
    let n = centered.len();
    centered[..n - lag]
        .iter()
        .zip(&centered[lag..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n as f64
}

/// ESS of already-prepared chains, combining autocorrelations across chains
/// and truncating the sum with Geyer's initial monotone positive sequence.
pub fn ess_raw(chains: &[&[f64]]) -> Result<Estimate> {
    let s = check_chains(chains)?;
    let m = chains.len();
    let n = s as f64;
    let centered: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let mu = mean(c);
            c.iter().map(|v| v - mu).collect()
        })
        .collect();
    let chain_var: Vec<f64> = centered.iter().map(|c| autocov(c, 0) * n / (n - 1.0)).collect();
    let mean_var = mean(&chain_var);
    let mut var_plus = mean_var * (n - 1.0) / n;
    if m > 1 {
        let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
        var_plus += sample_var(&means);
    }
    if !(var_plus > 0.0) {
        return Ok(Estimate::Degenerate);
    }
    let rho = |t: usize| -> f64 {
        let acov = centered.iter().map(|c| autocov(c, t)).sum::<f64>() / m as f64;
        1.0 - (mean_var - acov) / var_plus
    };
    // Geyer: sum consecutive pairs while positive, forcing them to decrease
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < s.saturating_sub(4) {
        let pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        t += 2;
    }
    // τ = −1 + 2·Σ pairs counts ρ₀ = 1 once
    let tau = (-1.0 + 2.0 * sum_pairs).max(f64::MIN_POSITIVE);
    let ess = (m as f64 * n / tau).min(m as f64 * n);
    Ok(Estimate::Value(ess))
}

/// Bulk effective sample size: rank-normalized split chains fed to
/// [`ess_raw`], capped at `C·S`.
pub fn ess_bulk(chains: &[&[f64]]) -> Result<Estimate> {
    let s = check_chains(chains)?;
    if chains.iter().all(|c| c.iter().all(|v| *v == c[0])) && chains.iter().all(|c| c[0] == chains[0][0]) {
        return Ok(Estimate::Degenerate);
    }
    let halves = split_halves(chains);
    let z = rank_normalize(&halves);
    let refs: Vec<&[f64]> = z.iter().map(|v| v.as_slice()).collect();
    Ok(match ess_raw(&refs)? {
        Estimate::Value(v) => Estimate::Value(v.min((chains.len() * s) as f64)),
        d => d,
    })
}

/// Shortest interval over the sorted samples holding `⌈mass·N⌉` draws; ties go
/// to the earliest window.
pub fn hdi(samples: &[f64], mass: f64) -> Result<(f64, f64)> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(invalid("mass", "must lie in (0, 1)"));
    }
    if samples.len() < 10 {
        return Err(Error::InsufficientSamples {
            have: samples.len(),
            need: 10,
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hdi samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // guard against 0.94·100 = 94.000…01 rounding up to 95
    let k = (libm::ceil(mass * n as f64 - 1e-9) as usize).clamp(1, n);
    let mut best = 0;
    let mut width = f64::INFINITY;
    for i in 0..=n - k {
        let w = sorted[i + k - 1] - sorted[i];
        if w < width {
            width = w;
            best = i;
        }
    }
    Ok((sorted[best], sorted[best + k - 1]))
}

/// One row of a convergence summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub param: String,
    pub mean: f64,
    pub sd: f64,
    pub hdi_low: f64,
    pub hdi_high: f64,
    pub ess: Estimate,
    pub rhat: Estimate,
}

impl ParameterSummary {
    pub fn from_chains(param: impl Into<String>, chains: &[&[f64]]) -> Result<Self> {
        check_chains(chains)?;
        let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
        let mu = mean(&all);
        let sd = if all.len() > 1 { libm::sqrt(sample_var(&all)) } else { 0.0 };
        let (hdi_low, hdi_high) = hdi(&all, HDI_MASS)?;
        Ok(Self {
            param: param.into(),
            mean: mu,
            sd,
            hdi_low,
            hdi_high,
            ess: ess_bulk(chains)?,
            rhat: split_rhat(chains)?,
        })
    }

    /// `R̂ < 1.05` and bulk ESS `> 400`.
    pub fn converged(&self) -> bool {
        matches!(self.rhat, Estimate::Value(r) if r < RHAT_THRESHOLD)
            && matches!(self.ess, Estimate::Value(e) if e > ESS_THRESHOLD)
    }

    /// Monte-Carlo standard error of the mean is below 5% of the posterior SD
    /// (equivalently, ESS above 400).
    pub fn mcse_within_sd_fraction(&self) -> bool {
        match self.ess {
            Estimate::Value(e) => self.sd / libm::sqrt(e) < 0.05 * self.sd,
            Estimate::Degenerate => false,
        }
    }
}

/// Per-parameter table plus per-chain acceptance rates.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSummary {
    pub rows: Vec<ParameterSummary>,
    pub acceptance: Vec<f64>,
}

impl DiagnosticsSummary {
    pub fn converged(&self) -> bool {
        self.rows.iter().all(ParameterSummary::converged)
    }

    pub fn row(&self, param: &str) -> Option<&ParameterSummary> {
        self.rows.iter().find(|r| r.param == param)
    }
}

/// Default parameter labels: `b` for the bias, `w1..` for the predictors.
pub fn default_labels(d: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(d);
    out.push(String::from("b"));
    for k in 1..d {
        out.push(alloc::format!("w{k}"));
    }
    out
}

/// Summarizes chains of one regression: one row per θ coordinate (in trace
/// order, labelled by `labels` or `b, w1, …`), then `tau` (residual standard
/// deviation `√τ²`) and, when the problem is given, `rmse`, the in-sample
/// root-mean-square residual of each draw.
pub fn summarize(
    chains: &[PosteriorDraws],
    labels: Option<&[String]>,
    prob: Option<&RegressionProblem>,
) -> Result<DiagnosticsSummary> {
    let first = chains.first().ok_or(Error::Empty)?;
    let d = first.dim;
    if let Some(c) = chains.iter().find(|c| c.dim != d || c.len() != first.len()) {
        return Err(Error::DimensionMismatch {
            expected: first.len(),
            found: c.len(),
        });
    }
    let names: Vec<String> = match labels {
        Some(l) if l.len() == d => l.to_vec(),
        Some(l) => {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: l.len(),
            })
        }
        None => default_labels(d),
    };
    let mut rows = Vec::with_capacity(d + 2);
    let columns = |f: &dyn Fn(&PosteriorDraws) -> Vec<f64>| -> Vec<Vec<f64>> { chains.iter().map(f).collect() };
    for (k, name) in names.iter().enumerate() {
        let cols = columns(&|c| c.parameter(k));
        let refs: Vec<&[f64]> = cols.iter().map(|v| v.as_slice()).collect();
        rows.push(ParameterSummary::from_chains(name.clone(), &refs)?);
    }
    let tau = columns(&|c| c.parameter(d).into_iter().map(libm::sqrt).collect());
    let refs: Vec<&[f64]> = tau.iter().map(|v| v.as_slice()).collect();
    rows.push(ParameterSummary::from_chains("tau", &refs)?);
    if let Some(prob) = prob {
        if prob.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: prob.dim(),
            });
        }
        let n = prob.n_obs() as f64;
        let rmse = columns(&|c| {
            (0..c.len())
                .map(|s| {
                    let theta = DVector::from_column_slice(c.theta(s));
                    libm::sqrt(prob.ssr(&theta) / n)
                })
                .collect()
        });
        let refs: Vec<&[f64]> = rmse.iter().map(|v| v.as_slice()).collect();
        rows.push(ParameterSummary::from_chains("rmse", &refs)?);
    }
    Ok(DiagnosticsSummary {
        rows,
        acceptance: chains.iter().map(PosteriorDraws::acceptance_rate).collect(),
    })
}

/// Column names of the summary table.
pub const SUMMARY_HEADER: [&str; 7] = ["param", "mean", "sd", "hdi_3", "hdi_97", "ess", "rhat"];

impl ParameterSummary {
    /// Cells in [`SUMMARY_HEADER`] order.
    pub fn cells(&self) -> [String; 7] {
        [
            self.param.clone(),
            self.mean.to_string(),
            self.sd.to_string(),
            self.hdi_low.to_string(),
            self.hdi_high.to_string(),
            self.ess.to_string(),
            self.rhat.to_string(),
        ]
    }
}
