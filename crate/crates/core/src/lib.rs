//! Time-series imputation by time-lagged chained equations, with a Bayesian
//! variant whose regression parameters are sampled by random-walk Metropolis
//! or Metropolis-adjusted Langevin.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the command
//! line and parallel execution live in the `tbmice` companion crate.
#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod baselines;
pub mod dataset;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod imputation;
pub mod metrics;
pub mod mice_classic;
pub mod missingness;
pub mod posterior;
pub mod rng;
pub mod samplers;
pub mod tbayes;

pub use dataset::{destandardize, standardize, MissingnessMask, StandardizationParams, TimeSeriesDataset};
pub use error::{Error, Result};
