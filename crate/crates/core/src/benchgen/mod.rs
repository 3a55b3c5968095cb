//! Synthetic systems with known relations and dynamics, and recovery scoring.

pub mod crn;
pub mod grid;
pub mod integrate;
pub mod metrics;
pub mod pendulum;

pub use crn::{crn_truth, simulate_crn, CrnSpec, Network};
pub use grid::{
    grid_truth, kick_schedule, simulate_grid, GridRun, GridSpec, Perturbation, PerturbationKind,
};
pub use integrate::{integrate_dense, DenseSolution, IntegrateError, IntegratorOptions};
pub use metrics::{recovery_metrics, MetricsOptions, RecoveryMetrics};
pub use pendulum::{
    pendulum_truth, simulate_pendulum, simulate_pendulum_angles, PendulumSpec, PendulumVariant,
};

use crate::dynfinder::DiscoveredModel;
use crate::timeseries::{inject_noise, TimeSeriesError, TimeSeriesTable};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("invalid specification: {0}")]
    Invalid(String),
    #[error("integration failed: {0}")]
    Integrate(#[from] IntegrateError),
    #[error("table error: {0}")]
    Table(#[from] TimeSeriesError),
    #[error("power flow has no steady state")]
    NoSteadyState,
    #[error("models are not comparable: {0}")]
    Incomparable(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    pub horizon: f64,
    pub samples: usize,
    /// Relative Gaussian noise (fraction of each column's std).
    #[serde(default)]
    pub noise: f64,
    /// Signal-to-noise ratio in dB, grid only.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

/// Generator specification file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Crn { spec: CrnSpec, run: RunParams },
    Grid { spec: GridSpec, run: RunParams },
    Pendulum { spec: PendulumSpec, run: RunParams },
}

impl SystemSpec {
    pub fn simulate(&self) -> Result<TimeSeriesTable<f64>> {
        match self {
            SystemSpec::Crn { spec, run } => {
                let t = simulate_crn(spec, run.horizon, run.samples)?;
                Ok(inject_noise(&t, run.noise, run.seed)?)
            }
            SystemSpec::Grid { spec, run } => {
                let t = simulate_grid(spec, run.horizon, run.samples, run.snr_db, run.seed)?.table;
                Ok(inject_noise(&t, run.noise, run.seed)?)
            }
            SystemSpec::Pendulum { spec, run } => {
                simulate_pendulum(spec, run.horizon, run.samples, run.noise, run.seed)
            }
        }
    }

    pub fn truth(&self) -> Result<DiscoveredModel<f64>> {
        match self {
            SystemSpec::Crn { spec, .. } => crn_truth(spec),
            SystemSpec::Grid { spec, .. } => grid_truth(spec),
            SystemSpec::Pendulum { spec, .. } => pendulum_truth(spec),
        }
    }
}
