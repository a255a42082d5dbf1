//! Experiment harness for the MARS optimizer: Sobol initialization, the BO
//! loop, MVaR hypervolume regret against a dense-grid reference, and
//! CSV/JSON records.

pub mod config;
pub mod export;
pub mod harness;

pub use config::ExperimentConfig;
pub use harness::{run_experiment, RunRecord};
