//! File formats, configuration and the experiment harness around
//! `tbmice-core`.

pub mod commands;
pub mod config;
pub mod io;
pub mod methods;

pub use config::{ConfigError, ExperimentConfig};
