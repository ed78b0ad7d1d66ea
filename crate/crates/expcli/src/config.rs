//! TOML experiment configuration. Every table is optional and falls back to
//! the defaults below.
//!
//! ```toml
//! seed = 7
//! out = "runs/demo"
//!
//! [rate_grid]
//! pre_trials = 20
//! down_trials = 40
//! n_pre = [32, 64, 128, 256]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ssl_kernel::analytic_spectra::LawSpec;
use ssl_kernel::kernelspace::KernelSpec;

use crate::error::{config_err, CliError, Result};

pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..count)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
        .collect()
}

fn powers_of_two(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|e| 1usize << e).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub rate_grid: RateGridConfig,
    pub lambda_sweep: LambdaSweepConfig,
    pub capacity: CapacityConfig,
    pub interplay: InterplayConfig,
    pub spectra: SpectraConfig,
    pub sgd: SgdTrainConfig,
    pub oracle: OracleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: None,
            out: None,
            threads: None,
            rate_grid: RateGridConfig::default(),
            lambda_sweep: LambdaSweepConfig::default(),
            capacity: CapacityConfig::default(),
            interplay: InterplayConfig::default(),
            spectra: SpectraConfig::default(),
            sgd: SgdTrainConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Pretraining and downstream sample-size grid on half-moon data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateGridConfig {
    pub kernel: KernelSpec,
    pub landmarks: usize,
    /// Spectral-convention regularization.
    pub lambda: f64,
    pub beta: f64,
    pub k: usize,
    pub m: usize,
    pub sigma: f64,
    pub n_pre: Vec<usize>,
    pub n_down: Vec<usize>,
    pub pre_trials: usize,
    pub down_trials: usize,
    /// Inputs used for the population moments of the pretraining task.
    pub population_inputs: usize,
    pub test_points: usize,
    /// Points on which the expected 0-1 error is measured.
    pub zero_one_points: usize,
    /// Trials per cell for the 0-1 error.
    pub zero_one_trials: usize,
    pub label_sharpness: f64,
    pub gammas: Vec<f64>,
    pub bootstrap: usize,
    pub confidence: f64,
    pub saturation_n_pre: usize,
}

impl Default for RateGridConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::exponential(0.6),
            landmarks: 100,
            lambda: 1e-3,
            beta: 1.0,
            k: 5,
            m: 2,
            sigma: 0.1,
            n_pre: powers_of_two(5, 11),
            n_down: powers_of_two(5, 11),
            pre_trials: 100,
            down_trials: 200,
            population_inputs: 100_000,
            test_points: 50_000,
            zero_one_points: 2000,
            zero_one_trials: 200,
            label_sharpness: 1.0,
            gammas: logspace(-6.0, 0.0, 13),
            bootstrap: 200,
            confidence: 0.99,
            saturation_n_pre: 64,
        }
    }
}

impl RateGridConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [("n_pre", &self.n_pre), ("n_down", &self.n_down)] {
            if grid.len() < 4 {
                return config_err(format!("{name} needs at least 4 grid points"));
            }
            if grid.iter().any(|&v| v < 2) || grid.windows(2).any(|w| w[1] <= w[0]) {
                return config_err(format!("{name} must be increasing sizes ≥ 2"));
            }
        }
        if self.pre_trials < 20 || self.down_trials < 20 {
            return config_err("rate grid needs at least 20 trials on each axis");
        }
        if !self.n_pre.contains(&self.saturation_n_pre) {
            return config_err(format!("saturation_n_pre {} is not in n_pre", self.saturation_n_pre));
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(*g >= 0.0)) {
            return config_err("gammas must be a non-empty list of non-negative values");
        }
        if self.landmarks == 0 || self.k == 0 || self.m < 2 || self.population_inputs == 0 || self.test_points == 0 {
            return config_err("landmarks, k, population_inputs and test_points must be positive; m ≥ 2");
        }
        if self.bootstrap < 100 || !(0.5..1.0).contains(&self.confidence) {
            return config_err("need ≥ 100 bootstrap resamples and a confidence level in [0.5, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSweepConfig {
    pub kernel: KernelSpec,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub beta: f64,
    pub shifts: Vec<i64>,
    pub lambdas: Vec<f64>,
    pub n_val: usize,
    pub n_test: usize,
    pub gammas: Vec<f64>,
    pub trials: usize,
}

impl Default for LambdaSweepConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::sphere_arccos(),
            n: 300,
            d: 8,
            k: 20,
            beta: 1.0,
            shifts: vec![-1, 0, 1],
            lambdas: logspace(-12.0, -2.0, 11),
            n_val: 300,
            n_test: 1500,
            gammas: logspace(-8.0, 0.0, 17),
            trials: 3,
        }
    }
}

impl LambdaSweepConfig {
    pub fn validate(&self) -> Result<()> {
        let pos: Vec<f64> = self.lambdas.iter().copied().filter(|l| *l > 0.0).collect();
        if pos.len() != self.lambdas.len() || pos.len() < 2 {
            return config_err("lambdas must be at least two positive values");
        }
        let lo = pos.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pos.iter().copied().fold(0.0, f64::max);
        if hi / lo < 1e3 {
            return config_err("lambda grid must span at least three decades");
        }
        if self.lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return config_err("lambdas must be increasing");
        }
        if self.trials == 0 || self.n == 0 || self.n_val == 0 || self.n_test == 0 || self.gammas.is_empty() {
            return config_err("trials, n, n_val, n_test and gammas must be non-empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityConfig {
    pub kernel: KernelSpec,
    pub n: usize,
    pub m: usize,
    pub sigma: f64,
    pub k: usize,
    pub beta: f64,
    /// Regularization levels; values ≤ 1e−8 are checked for collapse, larger
    /// ones for moon recovery.
    pub lambdas: Vec<f64>,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::gaussian(0.4),
            n: 30,
            m: 2,
            sigma: 0.1,
            k: 4,
            beta: 1.0,
            lambdas: vec![0.0, 1e-3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterplayConfig {
    pub d: usize,
    pub law: LawSpec,
    pub h: String,
    pub normalize: bool,
    pub beta: f64,
    pub lambdas: Vec<f64>,
    /// Regime table inputs: invariance and kernel eigenvalues of the candidates.
    pub regime_t: Vec<f64>,
    pub regime_k: Vec<f64>,
}

impl Default for InterplayConfig {
    fn default() -> Self {
        Self {
            d: 8,
            law: LawSpec::crop1d(4),
            h: "relu_ntk".into(),
            normalize: true,
            beta: 1.0,
            lambdas: logspace(-4.0, 0.0, 9),
            regime_t: vec![0.9, 0.75, 0.5],
            regime_k: vec![2.5, 4.0, 8.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraConfig {
    pub d: usize,
    pub laws: Vec<LawSpec>,
}

impl Default for SpectraConfig {
    fn default() -> Self {
        Self {
            d: 8,
            laws: vec![LawSpec::bitflip(0.25), LawSpec::crop1d(3), LawSpec::indexflip(0.3)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdTrainConfig {
    pub kernel: KernelSpec,
    pub landmarks: usize,
    pub n: usize,
    pub views: usize,
    pub sigma: f64,
    pub beta: f64,
    /// Feature-space regularization; the matching spectral level is half of it.
    pub lambda: f64,
    pub k: usize,
    pub schedule: String,
    pub step_scale: Option<f64>,
    pub steps: usize,
    pub m: usize,
    pub averaging_window: usize,
    pub trace_every: usize,
}

impl Default for SgdTrainConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::gaussian(0.5),
            landmarks: 10,
            n: 200,
            views: 4,
            sigma: 0.1,
            beta: 1.0,
            lambda: 0.1,
            k: 3,
            schedule: "inv_sqrt".into(),
            step_scale: None,
            steps: 20_000,
            m: 2,
            averaging_window: 10_000,
            trace_every: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub d: usize,
    pub tol: f64,
    pub bitflip_p: Vec<f64>,
    pub crop_w: Vec<usize>,
    pub indexflip_p: Vec<f64>,
    pub translate_delta: Vec<usize>,
    pub h: Vec<String>,
    pub cnn_q: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            d: 8,
            tol: 1e-9,
            bitflip_p: vec![0.0, 0.1, 0.25, 0.5],
            crop_w: vec![2, 4, 8],
            indexflip_p: vec![0.0, 0.3, 0.5],
            translate_delta: vec![1, 3],
            h: vec!["one".into(), "linear".into(), "relu_ntk".into()],
            cnn_q: 3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
        c.rate_grid.validate().unwrap();
        c.lambda_sweep.validate().unwrap();
    }

    #[test]
    fn partial_tables_and_unknown_keys() {
        let c = ExperimentConfig::from_toml("seed = 4\n[rate_grid]\nk = 3\n").unwrap();
        assert_eq!(c.seed, Some(4));
        assert_eq!(c.rate_grid.k, 3);
        assert_eq!(c.rate_grid.landmarks, 100);
        assert!(ExperimentConfig::from_toml("[rate_grid]\nkk = 3\n").is_err());
    }

    #[test]
    fn grid_validation() {
        let mut r = RateGridConfig::default();
        r.n_pre = vec![32, 64, 128];
        assert!(r.validate().is_err());
        let mut s = LambdaSweepConfig::default();
        s.lambdas = vec![1e-3, 1e-2];
        assert!(s.validate().is_err());
        assert_eq!(logspace(0.0, 2.0, 3), vec![1.0, 10.0, 100.0]);
    }
}
