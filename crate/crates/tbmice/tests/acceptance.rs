//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain binary
//! (`harness = false`) so the lines always reach the test output.
//!
//! Criteria 6 and 7 need the UCI AirQuality file, read from
//! `TBMICE_AIRQUALITY_CSV` or `data/AirQualityUCI.csv` at the workspace root.
//! Without it they report FAIL (data unavailable) without failing the run;
//! every other FAIL exits non-zero.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use common::{ar1, config, dataset, normal, write};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use tbmice::commands::cmd_benchmark;
use tbmice_core::baselines::{impute_locf, impute_mean};
use tbmice_core::diagnostics::summarize;
use tbmice_core::imputation::{pool_imputations, ImputationResult};
use tbmice_core::metrics::{mae, nmae, nrmse, rmse, score, Metric, MetricsReport};
use tbmice_core::mice_classic::{run_mice, MiceConfig};
use tbmice_core::missingness::{inject_mar, inject_mcar, mar_model, MarWeights};
use tbmice_core::posterior::{grad_log_posterior_theta, log_posterior, PriorSpec, RegressionProblem};
use tbmice_core::rng::{seeded, stream};
use tbmice_core::samplers::{run_chain, ChainConfig, ChainState, MalaConvention, PosteriorDraws, ProposalSpec, SamplerKind, TauUpdate};

enum Verdict {
    Pass(String),
    Fail(String),
    /// Inputs missing; reported as FAIL but does not fail the run.
    Unavailable(String),
}

use Verdict::*;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

// ---------------------------------------------------------------- oracles

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// `(ZᵀZ/τ² + I/σ²)⁻¹ Zᵀy/τ²` from plain loops.
fn conjugate_mean(z: &DMatrix<f64>, y: &DVector<f64>, tau2: f64, sigma2: f64) -> Vec<f64> {
    let (n, d) = z.shape();
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for i in 0..d {
        for j in 0..d {
            a[i][j] = (0..n).map(|t| z[(t, i)] * z[(t, j)]).sum::<f64>() / tau2;
        }
        a[i][i] += 1.0 / sigma2;
        b[i] = (0..n).map(|t| z[(t, i)] * y[t]).sum::<f64>() / tau2;
    }
    solve(a, b)
}

fn naive_metrics(pred: &[f64], actual: &[f64]) -> [f64; 4] {
    let n = pred.len() as f64;
    let (mut sq, mut abs, mut sum) = (0.0, 0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..pred.len() {
        let e = pred[i] - actual[i];
        sq += e * e;
        abs += e.abs();
        sum += actual[i];
        lo = lo.min(actual[i]);
        hi = hi.max(actual[i]);
    }
    let mean = sum / n;
    let mut var = 0.0;
    for a in actual {
        var += (a - mean) * (a - mean);
    }
    let r = (sq / n).sqrt();
    let m = abs / n;
    [r, m, r / (var / n).sqrt(), m / (hi - lo)]
}

// ---------------------------------------------------------------- fixtures

const THETA: [f64; 4] = [1.0, -0.5, 0.25, 2.0];
const TAU: f64 = 0.5;

/// d = 4, n = 200 Gaussian regression with i.i.d. standard-normal predictors.
fn conjugate_problem(seed: u64) -> RegressionProblem {
    let mut rng = seeded(seed);
    let z = DMatrix::from_fn(200, 4, |_, _| normal(&mut rng));
    let y = DVector::from_fn(200, |t, _| (0..4).map(|k| z[(t, k)] * THETA[k]).sum::<f64>() + TAU * normal(&mut rng));
    RegressionProblem::new(z, y).unwrap()
}

/// Two chains from overdispersed starts; `fixed_tau2` pins τ².
fn run_chains(prob: &RegressionProblem, kind: SamplerKind, fixed_tau2: Option<f64>, iters: usize, chains: u64, seed: u64) -> Vec<PosteriorDraws> {
    let prior = PriorSpec::default();
    let with_grad = kind == SamplerKind::Mala;
    (0..chains)
        .map(|c| {
            let mut rng = stream(seed, &[c]);
            let mut spec = ProposalSpec::for_problem(kind, prob, MalaConvention::AsPrinted).unwrap();
            let mut init = ChainState::overdispersed(prob, &prior, with_grad, 2.0, &mut rng).unwrap();
            if let Some(tau2) = fixed_tau2 {
                spec.tau_update = TauUpdate::Fixed;
                init = ChainState::new(init.theta, tau2, prob, &prior, with_grad).unwrap();
            }
            run_chain(spec, prob, &prior, init, &ChainConfig::new(iters, 0.2), seed, &mut rng)
                .unwrap()
                .draws
        })
        .collect()
}

// ---------------------------------------------------------------- criteria

fn c1_conjugate_oracle() -> Verdict {
    let start = Instant::now();
    let prob = conjugate_problem(101);
    let exact = conjugate_mean(prob.design(), prob.response(), TAU * TAU, 100.0);
    let mut worst: f64 = 0.0;
    for kind in [SamplerKind::RwmEmpirical, SamplerKind::Mala] {
        let draws = run_chains(&prob, kind, Some(TAU * TAU), 5000, 2, 7);
        let summary = summarize(&draws, None, None).unwrap();
        for (k, want) in exact.iter().enumerate() {
            let row = &summary.rows[k];
            let mcse = row.sd / row.ess.value().unwrap().sqrt();
            worst = worst.max((row.mean - want).abs() / mcse);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst < 3.0 && secs < 60.0, format!("max |mean − exact| = {worst:.2} MCSE, {secs:.1}s"))
}

fn c2_gradient() -> Verdict {
    let mut rng = seeded(202);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..8);
        let n = rng.random_range(5..60);
        let z = DMatrix::from_fn(n, d, |_, _| 2.0 * normal(&mut rng));
        let y = DVector::from_fn(n, |_, _| 3.0 * normal(&mut rng));
        let theta = DVector::from_fn(d, |_, _| normal(&mut rng));
        let tau2 = rng.random_range(0.05..4.0);
        let prior = PriorSpec {
            theta_var: rng.random_range(0.5..200.0),
            ..PriorSpec::default()
        };
        let prob = RegressionProblem::new(z, y).unwrap();
        let grad = grad_log_posterior_theta(&theta, tau2, &prob, &prior).unwrap();
        for k in 0..d {
            let (mut up, mut down) = (theta.clone(), theta.clone());
            up[k] += h;
            down[k] -= h;
            let fd = (log_posterior(&up, tau2, &prob, &prior).unwrap() - log_posterior(&down, tau2, &prob, &prior).unwrap()) / (2.0 * h);
            worst = worst.max((grad[k] - fd).abs() / grad[k].abs().max(1.0));
        }
    }
    verdict(worst < 1e-5, format!("max relative error {worst:.2e} over 100 configurations"))
}

fn c3_acceptance_bands() -> Verdict {
    let prob = conjugate_problem(303);
    let mut detail = Vec::new();
    let mut ok = true;
    for kind in [SamplerKind::RwmEmpirical, SamplerKind::Mala] {
        let (lo, hi) = kind.acceptance_band();
        let rates: Vec<f64> = (0..10).map(|seed| run_chains(&prob, kind, None, 5000, 1, seed)[0].acceptance_rate()).collect();
        let inside = rates.iter().filter(|r| (lo..=hi).contains(*r)).count();
        ok &= inside >= 9;
        let (min, max) = rates.iter().fold((1.0f64, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        detail.push(format!("{kind} {inside}/10 in [{lo}, {hi}] (range {min:.3}–{max:.3})"));
    }
    verdict(ok, detail.join("; "))
}

fn c4_diagnostics() -> Verdict {
    let prob = conjugate_problem(404);
    let mut ok = true;
    let mut detail = Vec::new();
    let mut tau_ess = Vec::new();
    for kind in [SamplerKind::RwmEmpirical, SamplerKind::Mala] {
        let draws = run_chains(&prob, kind, None, 30_000, 2, 9);
        let summary = summarize(&draws, None, Some(&prob)).unwrap();
        let max_rhat = summary.rows.iter().map(|r| r.rhat.value().unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
        let min_ess = summary.rows.iter().map(|r| r.ess.value().unwrap_or(0.0)).fold(f64::INFINITY, f64::min);
        ok &= summary.converged();
        let t = summary.row("tau").unwrap().ess.value().unwrap_or(0.0);
        tau_ess.push(t);
        detail.push(format!("{kind}: max R̂ {max_rhat:.4}, min ESS {min_ess:.0}, τ ESS {t:.0}"));
    }
    ok &= tau_ess[1] > tau_ess[0];
    verdict(ok, format!("2×30000 iterations; {}", detail.join("; ")))
}

fn c5_ar1_ordering() -> Verdict {
    let mut wins = 0;
    let mut sums = [0.0; 3];
    for seed in 0..10u64 {
        let ds = dataset(&["x"], &[ar1(500, 0.8, 500 + seed)]);
        let (masked, truth) = inject_mcar(&ds, 0.2, &[], seed).unwrap();
        let cfg = MiceConfig {
            seed,
            ..MiceConfig::default()
        };
        let pooled = pool_imputations(&run_mice(&masked, &cfg).unwrap()).unwrap();
        let get = |ds: &tbmice_core::TimeSeriesDataset| score(ds, &truth, "m", "-").unwrap().get("x", "m", Metric::Nrmse).unwrap().mean;
        let (mice, locf, mean) = (get(&pooled.dataset), get(&impute_locf(&masked).unwrap()), get(&impute_mean(&masked).unwrap()));
        if mice < locf && mice < mean {
            wins += 1;
        }
        sums[0] += mice;
        sums[1] += locf;
        sums[2] += mean;
    }
    verdict(
        wins >= 9,
        format!(
            "MICE below LOCF and mean in {wins}/10 seeds (mean NRMSE {:.3} / {:.3} / {:.3})",
            sums[0] / 10.0,
            sums[1] / 10.0,
            sums[2] / 10.0
        ),
    )
}

fn airquality_path() -> Option<PathBuf> {
    let path = std::env::var_os("TBMICE_AIRQUALITY_CSV")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/AirQualityUCI.csv"));
    path.exists().then_some(path)
}

/// Criterion 6's experiment, shared with criterion 7.
fn airquality_report() -> Option<Result<(MetricsReport, f64), String>> {
    let data = airquality_path()?;
    let out = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let cfg = config(&format!(
        "preset = airquality\ndata = {}\nout = {}\nmethods = mice,tbayes-rwm,tbayes-mala\nmechanism = mcar\nrate = 0.2\nruns = 5\nseed = 2024\niters = 2000\n",
        data.display(),
        out.path().display()
    ));
    Some(
        cmd_benchmark(&cfg)
            .map(|res| (res.report, start.elapsed().as_secs_f64()))
            .map_err(|e| format!("{e:#}")),
    )
}

const NO_DATA: &str = "AirQuality data unavailable (set TBMICE_AIRQUALITY_CSV or place data/AirQualityUCI.csv)";

fn c6_airquality(report: &Option<Result<(MetricsReport, f64), String>>) -> Verdict {
    let (report, secs) = match report {
        None => return Unavailable(NO_DATA.into()),
        Some(Err(e)) => return Fail(format!("benchmark failed: {e}")),
        Some(Ok(r)) => r,
    };
    let get = |m: &str| report.get("CO(GT)", m, Metric::Nrmse).map(|r| r.mean).unwrap_or(f64::NAN);
    let (mice, rwm, mala) = (get("mice"), get("tbayes-rwm"), get("tbayes-mala"));
    let best = rwm.min(mala);
    verdict(
        best < mice && best < 0.30 && *secs < 900.0,
        format!("CO(GT) NRMSE mice {mice:.4}, tbayes-rwm {rwm:.4}, tbayes-mala {mala:.4}; {secs:.0}s"),
    )
}

fn c7_sampler_equivalence(report: &Option<Result<(MetricsReport, f64), String>>) -> Verdict {
    let report = match report {
        None => return Unavailable(NO_DATA.into()),
        Some(Err(e)) => return Fail(format!("benchmark failed: {e}")),
        Some(Ok((r, _))) => r,
    };
    let mut worst: (f64, String) = (0.0, String::new());
    for row in report.rows.iter().filter(|r| r.method == "tbayes-rwm" && r.metric == Metric::Nrmse) {
        let Some(mala) = report.get(&row.variable, "tbayes-mala", Metric::Nrmse) else {
            return Fail(format!("no tbayes-mala row for {}", row.variable));
        };
        let rel = (row.mean - mala.mean).abs() / row.mean.min(mala.mean);
        if rel >= worst.0 {
            worst = (rel, row.variable.clone());
        }
    }
    verdict(worst.0 < 0.05, format!("max relative RWM/MALA NRMSE gap {:.2}% ({})", 100.0 * worst.0, worst.1))
}

fn c8_metric_oracle() -> Verdict {
    let mut rng = seeded(808);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..100);
        let pred: Vec<f64> = (0..n).map(|_| 10.0 * normal(&mut rng)).collect();
        let actual: Vec<f64> = (0..n).map(|_| 10.0 * normal(&mut rng)).collect();
        let want = naive_metrics(&pred, &actual);
        let got = [
            rmse(&pred, &actual).unwrap(),
            mae(&pred, &actual).unwrap(),
            nrmse(&pred, &actual).unwrap(),
            nmae(&pred, &actual).unwrap(),
        ];
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
    }
    let actual: Vec<f64> = (0..500).map(|_| 3.0 + 2.0 * normal(&mut rng)).collect();
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let constant = nrmse(&vec![mean; actual.len()], &actual).unwrap();
    verdict(
        worst < 1e-12 && constant == 1.0,
        format!("max deviation {worst:.1e} over 1000 pairs; constant-mean NRMSE = {constant}"),
    )
}

fn c9_missingness() -> Verdict {
    let mut rng = seeded(909);
    let n = 1500;
    let base: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    // six correlated columns: common factor plus noise
    let cols: Vec<Vec<f64>> = (0..6).map(|_| base.iter().map(|b| b + normal(&mut rng)).collect()).collect();
    let names = ["a", "b", "c", "d", "e", "f"];
    let ds = dataset(&names, &cols);
    let targeted = (n * 6) as f64;
    // realized rate pooled over the 20 seeds, against the binomial SD of all
    // 20·n·6 draws; per-seed counts are reported alongside
    let sd = |cells: f64| (0.2 * 0.8 / cells).sqrt();
    let counts: Vec<usize> = (0..20u64).map(|seed| inject_mcar(&ds, 0.2, &[], seed).unwrap().1.len()).collect();
    let per_seed = counts.iter().filter(|&&k| (k as f64 / targeted - 0.2).abs() <= 3.0 * sd(targeted)).count();
    let pooled = counts.iter().sum::<usize>() as f64 / (20.0 * targeted);
    let pooled_z = (pooled - 0.2) / sd(20.0 * targeted);
    let model = mar_model(&ds, &[0, 1, 2, 3], 0.4, 31, MarWeights::Seeded).unwrap();
    let prob_gap = (0..4).map(|j| (model.mean_probability(j).unwrap() - 0.4).abs()).fold(0.0, f64::max);
    let (_, truth) = inject_mar(&ds, &[0, 1, 2, 3], 0.4, 31).unwrap();
    let overall = truth.len() as f64 / targeted;
    verdict(
        pooled_z.abs() <= 3.0 && prob_gap < 1e-3 && (overall - 0.267).abs() <= 0.02,
        format!("MCAR pooled rate {pooled:.4} ({pooled_z:+.2} SD; {per_seed}/20 seeds individually within 3 SD); MAR mean-probability gap {prob_gap:.1e}; MAR overall rate {overall:.4}"),
    )
}

fn c10_pooling() -> Verdict {
    let ds = dataset(&["x", "y"], &[ar1(200, 0.8, 11), ar1(200, 0.5, 12)]);
    let (masked, _) = inject_mcar(&ds, 0.2, &[], 13).unwrap();
    let result = run_mice(&masked, &MiceConfig { seed: 14, ..MiceConfig::default() }).unwrap();
    let pooled = pool_imputations(&result).unwrap();
    let m = result.m() as f64;
    let (mut mean_gap, mut t_gap): (f64, f64) = (0.0, 0.0);
    for (i, cell) in pooled.cells.iter().enumerate() {
        let vals: Vec<f64> = result.imputations.iter().map(|d| d.values()[(cell.row, cell.col)]).collect();
        let mut sum = 0.0;
        for v in &vals {
            sum += v;
        }
        let mean = sum / m;
        mean_gap = mean_gap.max((cell.value - mean).abs());
        let mut b = 0.0;
        for v in &vals {
            b += (v - mean) * (v - mean);
        }
        b /= m - 1.0;
        let w = result.predictive_var.iter().map(|v| v[i]).sum::<f64>() / m;
        let t = w + (1.0 + 1.0 / m) * b;
        t_gap = t_gap.max((cell.total - t).abs() / t.max(f64::MIN_POSITIVE));
    }
    let identical = ImputationResult {
        imputations: vec![result.imputations[0].clone(); 4],
        predictive_mean: vec![result.predictive_mean[0].clone(); 4],
        predictive_var: vec![result.predictive_var[0].clone(); 4],
        ..result.clone()
    };
    let max_b = pool_imputations(&identical)
        .unwrap()
        .cells
        .iter()
        .map(|c| c.between)
        .fold(0.0, f64::max);
    verdict(
        mean_gap <= 1e-12 && t_gap <= 1e-14 && max_b == 0.0,
        format!("max |pooled − mean| {mean_gap:.1e}; max relative T gap {t_gap:.1e}; B for identical imputations {max_b}"),
    )
}

fn c11_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "ar.csv", &dataset(&["a", "b"], &[ar1(200, 0.8, 21), ar1(200, 0.6, 22)]));
    let run = |out: &str, workers: usize| {
        let cfg = config(&format!(
            "data = {}\nout = {}\nmethods = mean,linear,mice,tbayes-rwm\nruns = 3\nseed = 99\niters = 500\nsweeps = 3\nworkers = {workers}\n",
            data.display(),
            dir.path().join(out).display()
        ));
        cmd_benchmark(&cfg).map(|res| std::fs::read(res.report_path).unwrap())
    };
    match (run("a", 1), run("b", 4)) {
        (Ok(a), Ok(b)) => verdict(a == b, format!("report.csv {} bytes, identical: {}", a.len(), a == b)),
        (Err(e), _) | (_, Err(e)) => Fail(format!("benchmark failed: {e:#}")),
    }
}

fn main() -> ExitCode {
    let airquality = airquality_report();
    type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("conjugate-posterior oracle", Box::new(c1_conjugate_oracle)),
        ("gradient check", Box::new(c2_gradient)),
        ("acceptance bands", Box::new(c3_acceptance_bands)),
        ("diagnostics thresholds", Box::new(c4_diagnostics)),
        ("AR(1) ordering", Box::new(c5_ar1_ordering)),
        ("AirQuality direction", Box::new(|| c6_airquality(&airquality))),
        ("sampler equivalence", Box::new(|| c7_sampler_equivalence(&airquality))),
        ("metric oracle", Box::new(c8_metric_oracle)),
        ("missingness calibration", Box::new(c9_missingness)),
        ("pooling identities", Box::new(c10_pooling)),
        ("determinism", Box::new(c11_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check() {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Unavailable(d) => ("FAIL", d),
        };
        println!("{tag} criterion {:>2} ({name}): {detail}", i + 1);
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
