//! Experiment configuration files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CompoundPoissonSpec, ExtendedRate, QueueModel, RiskModel};
use crate::queue_sim::{QueueBudget, DEFAULT_BATCHES, DEFAULT_REPLICAS};
use crate::risk_sim::{default_horizon, SimulationBudget};
use crate::verify::{VerifyInput, VerifySettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Replicas `N` for samples of `U`.
    pub replicas: usize,
    /// Risk horizon `T`; defaults to `200 / min(positive drift cushions)`.
    pub horizon: Option<f64>,
    pub epsilon_x: Option<f64>,
    pub x_max: Option<f64>,
    pub burn_in_fraction: f64,
    /// Total simulated queue time; defaults to `1e6 / min(c1, c2)`.
    pub queue_total_time: Option<f64>,
    pub queue_replicas: usize,
    pub queue_batches: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            replicas: 20_000,
            horizon: None,
            epsilon_x: None,
            x_max: None,
            burn_in_fraction: 0.2,
            queue_total_time: None,
            queue_replicas: DEFAULT_REPLICAS,
            queue_batches: DEFAULT_BATCHES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Transform arguments.
    pub s: Vec<f64>,
    /// CDF arguments.
    pub u: Vec<f64>,
    /// Imaginary parts `v` of `theta = i v` for factorization output.
    pub theta: Vec<f64>,
    /// Rates `r` of the factors written by `analyze --what factorize`.
    pub factor_rates: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            s: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            u: (1..=100).map(|k| 0.1 * k as f64).collect(),
            theta: (0..40).map(|k| 0.05 * 1000f64.powf(k as f64 / 39.0)).collect(),
            factor_rates: vec![0.1, 1.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub sigma_multiplier: f64,
    pub ks_slack: f64,
    pub transform_slack: f64,
    pub identity: f64,
    pub kernel: f64,
    pub limit: f64,
    pub scaled_limit: f64,
    pub cdf: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        let v = VerifySettings::default();
        ToleranceConfig {
            sigma_multiplier: v.sigma_multiplier,
            ks_slack: v.ks_slack,
            transform_slack: v.transform_slack,
            identity: v.identity_tolerance,
            kernel: v.kernel_tolerance,
            limit: v.limit_tolerance,
            scaled_limit: v.scaled_limit_tolerance,
            cdf: v.cdf_tolerance,
        }
    }
}

fn default_seed() -> u64 {
    7
}

fn default_output_dir() -> String {
    "out".into()
}

/// A complete experiment: both drivers, interaction rates, budgets, grids,
/// tolerances, master seed and output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub company1: CompoundPoissonSpec,
    pub company2: CompoundPoissonSpec,
    pub r1: ExtendedRate,
    pub r2: ExtendedRate,
    #[serde(default)]
    pub rho1: Option<f64>,
    #[serde(default)]
    pub rho2: Option<f64>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn risk_model(&self) -> RiskModel {
        RiskModel::new(self.company1.clone(), self.company2.clone(), self.r1, self.r2)
    }

    /// Present when both `rho1` and `rho2` are given.
    pub fn queue_model(&self) -> Result<Option<QueueModel>> {
        match (self.rho1, self.rho2) {
            (Some(a), Some(b)) => Ok(Some(QueueModel::new(self.company1.clone(), self.company2.clone(), a, b))),
            (None, None) => Ok(None),
            _ => Err(Error::Config("rho1 and rho2 must be given together".into())),
        }
    }

    pub fn simulation_budget(&self) -> SimulationBudget {
        let model = self.risk_model();
        let mut b = SimulationBudget::defaults_for(&model, self.simulation.replicas, self.seed);
        b.horizon = self.simulation.horizon.unwrap_or_else(|| default_horizon(&model));
        if let Some(e) = self.simulation.epsilon_x {
            b.epsilon = e;
        }
        if let Some(x) = self.simulation.x_max {
            b.x_max = x;
        }
        b
    }

    pub fn queue_budget(&self, model: &QueueModel) -> QueueBudget {
        let mut b = QueueBudget::defaults_for(model, self.seed);
        let total = self.simulation.queue_total_time.unwrap_or(b.horizon * b.replicas as f64);
        b.replicas = self.simulation.queue_replicas.max(1);
        b.horizon = total / b.replicas as f64;
        b.batches = self.simulation.queue_batches;
        b.burn_in_fraction = self.simulation.burn_in_fraction;
        b
    }

    pub fn verify_input(&self) -> Result<VerifyInput> {
        let t = &self.tolerances;
        let queue = self.queue_model()?;
        let settings = VerifySettings {
            replicas: self.simulation.replicas,
            horizon: self.simulation.horizon,
            epsilon_x: self.simulation.epsilon_x,
            x_max: self.simulation.x_max,
            transform_grid: self.grids.s.clone(),
            sigma_multiplier: t.sigma_multiplier,
            ks_slack: t.ks_slack,
            transform_slack: t.transform_slack,
            identity_tolerance: t.identity,
            kernel_tolerance: t.kernel,
            limit_tolerance: t.limit,
            scaled_limit_tolerance: t.scaled_limit,
            queue_budget: queue.as_ref().map(|q| self.queue_budget(q)),
            queue_grid: self.grids.s.clone(),
            cdf_grid: self.grids.u.clone(),
            cdf_tolerance: t.cdf,
            ..VerifySettings::default()
        };
        Ok(VerifyInput { risk: self.risk_model(), queue, settings, master_seed: self.seed })
    }
}
