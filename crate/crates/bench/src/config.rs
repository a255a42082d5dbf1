//! Flat experiment configuration. File keys mirror the CLI flags (kebab-case).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mars_core::acquisition::{AcqSettings, Method};
use mars_core::gp::FitConfig;
use mars_core::optim::{GradientMode, OptimizerConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub problem: String,
    pub method: Method,
    pub seed: u64,
    /// BO iterations after initialization.
    pub iters: usize,
    pub batch: usize,
    /// Risk level; the problem's registered level when absent.
    pub alpha: Option<f64>,
    pub n_xi: usize,
    pub n_mc: usize,
    pub n_xi_eval: usize,
    /// Initial Sobol designs; `2(d + 1)` when absent.
    pub n_init: Option<usize>,
    pub n_prune: usize,
    pub raw_candidates: usize,
    pub n_restarts: usize,
    pub max_iter: usize,
    pub gradient_mode: GradientMode,
    pub rff_features: usize,
    pub beta: f64,
    pub sigmoid_temperature: f64,
    pub zeta: Option<f64>,
    pub fit_restarts: usize,
    /// Points per dimension of the dense grid used for the true MVaR set.
    pub grid: usize,
    /// Seed of the evaluation perturbations, shared by all runs being compared.
    pub eval_seed: u64,
    /// Record measured wall time; off keeps CSV output byte-reproducible.
    pub timing: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let acq = AcqSettings::default();
        let opt = OptimizerConfig::default();
        Self {
            problem: "gmm2-mult".into(),
            method: Method::MarsNei,
            seed: 0,
            iters: 10,
            batch: 1,
            alpha: None,
            n_xi: acq.n_xi,
            n_mc: acq.n_mc,
            n_xi_eval: 512,
            n_init: None,
            n_prune: acq.n_prune,
            raw_candidates: opt.raw_candidates,
            n_restarts: opt.n_restarts,
            max_iter: opt.max_iter,
            gradient_mode: opt.gradient_mode,
            rff_features: acq.rff_features,
            beta: acq.beta,
            sigmoid_temperature: acq.sigmoid_temperature,
            zeta: None,
            fit_restarts: FitConfig::default().restarts,
            grid: 200,
            eval_seed: 0,
            timing: false,
            out: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.batch == 0 || self.n_xi == 0 || self.n_mc == 0 || self.n_prune == 0 || self.grid == 0 {
            bail!("all counts must be >= 1");
        }
        if self.n_xi_eval < self.n_xi {
            bail!("n-xi-eval ({}) must be >= n-xi ({})", self.n_xi_eval, self.n_xi);
        }
        if self.n_init == Some(0) {
            bail!("n-init must be >= 1");
        }
        self.acq_settings().validate()?;
        Ok(())
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            raw_candidates: self.raw_candidates,
            n_restarts: self.n_restarts,
            max_iter: self.max_iter,
            gradient_mode: self.gradient_mode,
            ..OptimizerConfig::default()
        }
    }

    pub fn acq_settings(&self) -> AcqSettings {
        AcqSettings {
            n_xi: self.n_xi,
            n_mc: self.n_mc,
            n_prune: self.n_prune,
            beta: self.beta,
            rff_features: self.rff_features,
            sigmoid_temperature: self.sigmoid_temperature,
            zeta: self.zeta,
            optimizer: self.optimizer(),
            ..AcqSettings::default()
        }
    }

    /// File stem shared by the CSV and JSON outputs of one trial.
    pub fn trial_stem(&self) -> String {
        format!("{}_{}_seed{}", self.problem, self.method, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_file_round_trip() {
        let cfg = ExperimentConfig::from_toml_str("problem = \"toy1d\"\nmethod = \"mars-ts\"\nn-xi = 16\niters = 3\n")
            .unwrap();
        assert_eq!(cfg.problem, "toy1d");
        assert_eq!(cfg.method, Method::MarsTs);
        assert_eq!(cfg.n_xi, 16);
        assert_eq!(cfg.n_mc, 256);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn validation() {
        let cfg = ExperimentConfig {
            n_xi_eval: 8,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }
}
