use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::SolverOptions;

/// Sweep parameters, read from TOML. Missing keys take the defaults below;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub snr_grid_db: Vec<f64>,
    pub eps_bar_grid: Vec<f64>,
    pub trials: usize,
    pub samples_per_region: usize,
    pub seed: u64,
    pub solver_options: SolverOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_t: 2,
            n_r: 2,
            snr_grid_db: (0..=6).map(|k| 5.0 * k as f64).collect(),
            eps_bar_grid: vec![0.0, 0.05, 0.15],
            trials: 200,
            samples_per_region: 2000,
            seed: 1,
            solver_options: SolverOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r == 0 || self.n_r > self.n_t {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= n_r <= n_t, got n_r={}, n_t={}",
                self.n_r, self.n_t
            )));
        }
        if self.trials == 0 || self.samples_per_region == 0 {
            return Err(Error::InvalidConfig(
                "trials and samples_per_region must be positive".into(),
            ));
        }
        if self.snr_grid_db.is_empty() || self.eps_bar_grid.is_empty() {
            return Err(Error::InvalidConfig("empty grid".into()));
        }
        if let Some(s) = self.snr_grid_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig(format!("snr {s} is not finite")));
        }
        if let Some(e) = self.eps_bar_grid.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::InvalidConfig(format!("eps_bar {e} outside [0, 1]")));
        }
        self.solver_options.validate()
    }
}
