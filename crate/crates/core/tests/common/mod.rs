#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use tbmice_core::posterior::RegressionProblem;
use tbmice_core::rng::seeded;
use tbmice_core::TimeSeriesDataset;

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
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

/// Posterior mean of θ with known τ² and prior `N(0, σ²I)`:
/// `(ZᵀZ/τ² + I/σ²)⁻¹ Zᵀy/τ²`, from plain loops.
pub fn conjugate_mean(z: &DMatrix<f64>, y: &DVector<f64>, tau2: f64, sigma2: f64) -> Vec<f64> {
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

/// Gaussian regression with i.i.d. standard-normal predictors (no bias
/// column) and noise SD `tau`.
pub fn conjugate_problem(n: usize, theta: &[f64], tau: f64, seed: u64) -> RegressionProblem {
    let mut rng = seeded(seed);
    let d = theta.len();
    let z = DMatrix::from_fn(n, d, |_, _| normal(&mut rng));
    let y = DVector::from_fn(n, |t, _| (0..d).map(|k| z[(t, k)] * theta[k]).sum::<f64>() + tau * normal(&mut rng));
    RegressionProblem::new(z, y).unwrap()
}

/// `x_t = φ·x_{t−1} + ε_t`, started from the stationary distribution.
pub fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    let mut x = Vec::with_capacity(n);
    let mut prev = normal(&mut rng) / (1.0 - phi * phi).sqrt();
    for _ in 0..n {
        x.push(prev);
        prev = phi * prev + normal(&mut rng);
    }
    x
}

pub fn dataset(columns: &[Vec<f64>]) -> TimeSeriesDataset {
    let n = columns[0].len();
    let m = DMatrix::from_fn(n, columns.len(), |t, j| columns[j][t]);
    let names = (0..columns.len()).map(|j| format!("x{}", j + 1)).collect();
    TimeSeriesDataset::from_matrix(m, names).unwrap()
}
