//! Experiment runner for the wafer classifiers: training and evaluation runs,
//! analog-versus-software comparisons, cost estimates and the consolidated
//! result tables.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{Architecture, ExperimentConfig, Overrides};
pub use error::{BenchError, Result};
