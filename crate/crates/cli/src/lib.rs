//! Experiment runner for rank-based generative training: 1D and sliced 2D
//! benchmarks, density recovery, monotone transport, property checks,
//! timing, and SVG plots of the resulting CSV files.

pub mod config;
pub mod error;
pub mod experiments;
pub mod kde;
pub mod plot;
pub mod props;

pub use config::{Experiment, ExperimentConfig, Method};
pub use error::{CliError, Result};
