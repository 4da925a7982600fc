#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use tbmice::config::{parse_pairs, ExperimentConfig};
use tbmice_core::rng::seeded;
use tbmice_core::TimeSeriesDataset;

pub fn normal(rng: &mut tbmice_core::rng::SeedRng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    let mut prev = normal(&mut rng) / (1.0 - phi * phi).sqrt();
    (0..n)
        .map(|_| {
            let v = prev;
            prev = phi * prev + normal(&mut rng);
            v
        })
        .collect()
}

pub fn dataset(names: &[&str], columns: &[Vec<f64>]) -> TimeSeriesDataset {
    let n = columns[0].len();
    let m = DMatrix::from_fn(n, columns.len(), |t, j| columns[j][t]);
    TimeSeriesDataset::from_matrix(m, names.iter().map(|s| s.to_string()).collect()).unwrap()
}

pub fn write(dir: &Path, file: &str, ds: &TimeSeriesDataset) -> PathBuf {
    let path = dir.join(file);
    tbmice::io::write_dataset(&path, ds).unwrap();
    path
}

/// `y = 1 + z·θ + 0.5·ε` with three i.i.d. standard-normal predictors.
pub fn conjugate_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let mut rng = seeded(seed);
    let theta = [1.0, -0.5, 0.25];
    let z: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
    let y: Vec<f64> = (0..n)
        .map(|t| 1.0 + (0..3).map(|k| theta[k] * z[k][t]).sum::<f64>() + 0.5 * normal(&mut rng))
        .collect();
    write(dir, "conjugate.csv", &dataset(&["y", "z1", "z2", "z3"], &[y, z[0].clone(), z[1].clone(), z[2].clone()]))
}

pub fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_pairs(&parse_pairs(text).unwrap()).unwrap()
}

pub fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}
