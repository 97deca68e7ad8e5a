use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::coupling::{CouplingConfig, LowModeProjector};
use crate::diagnostics::LedgerSettings;
use crate::dynamics::{random_state, CflPolicy, ForcingSpec, InitialData, ModelParams, StepSchedule, SystemState};
use crate::ergodicity::{DEFAULT_BURN_IN, DEFAULT_WINDOWS};
use crate::noise::{NoiseBand, NoiseBasis, NoiseConfig};
use crate::spectral::FourierGrid;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub forcing: ForcingSpec,
    /// Viscous regularization `ε` of the charge equation.
    #[serde(default)]
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicitySettings {
    /// Fraction of the run discarded before averaging.
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    /// Windows used for standard errors.
    #[serde(default = "default_windows")]
    pub windows: usize,
    /// Relative tolerance of the half-window stationarity test.
    #[serde(default = "default_rel_tol")]
    pub stationarity_tol: f64,
    /// Combined standard errors allowed between ensembles.
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
}

fn default_burn_in() -> f64 {
    DEFAULT_BURN_IN
}

fn default_windows() -> usize {
    DEFAULT_WINDOWS
}

fn default_rel_tol() -> f64 {
    0.1
}

fn default_sigmas() -> f64 {
    2.0
}

impl Default for ErgodicitySettings {
    fn default() -> Self {
        ErgodicitySettings {
            burn_in_fraction: default_burn_in(),
            windows: default_windows(),
            stationarity_tol: default_rel_tol(),
            sigmas: default_sigmas(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSettings {
    #[serde(default = "default_paths")]
    pub paths: u64,
    /// First path index.
    #[serde(default)]
    pub first_path: u64,
    /// Target for `‖ω(T)‖²/‖ω(0)‖²` in coupling runs.
    #[serde(default = "default_target")]
    pub contraction_target: f64,
}

fn default_paths() -> u64 {
    4
}

fn default_target() -> f64 {
    1e-3
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        EnsembleSettings {
            paths: default_paths(),
            first_path: 0,
            contraction_target: default_target(),
        }
    }
}

/// A complete, validated-before-use description of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_noise")]
    pub noise: NoiseConfig,
    #[serde(default = "default_schedule")]
    pub schedule: StepSchedule,
    #[serde(default = "default_initial")]
    pub initial: InitialData,
    /// Snapshot to start from instead of `initial`.
    #[serde(default)]
    pub initial_snapshot: Option<PathBuf>,
    #[serde(default)]
    pub ledger: LedgerSettings,
    #[serde(default)]
    pub cfl: CflPolicy,
    #[serde(default)]
    pub ensemble: EnsembleSettings,
    #[serde(default)]
    pub ergodicity: ErgodicitySettings,
    #[serde(default = "default_coupling")]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_n() -> usize {
    32
}

fn default_noise() -> NoiseConfig {
    let band = NoiseBand {
        max_shell: 4,
        sigma: 0.1,
        alpha: 1.0,
    };
    NoiseConfig {
        charge: Some(band.clone()),
        velocity: Some(band),
        modes: vec![],
    }
}

fn default_schedule() -> StepSchedule {
    StepSchedule::new(0.01, 1.0)
}

fn default_initial() -> InitialData {
    InitialData {
        charge_l2: 1.0,
        velocity_l2: 1.0,
        ..Default::default()
    }
}

fn default_coupling() -> CouplingConfig {
    CouplingConfig {
        shell: 4,
        lambda: 2.0 * 5f64.sqrt(),
        budget: 1e6,
        radius: 1.0,
        strict: false,
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

/// Objects built from a validated [`RunConfig`].
#[derive(Clone, Debug)]
pub struct RunSetup {
    pub grid: Arc<FourierGrid>,
    pub params: ModelParams,
    pub basis: NoiseBasis,
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// JSON with every default written out.
    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<(), IoError> {
        std::fs::write(dir.join("resolved_config.json"), self.resolved_json())?;
        Ok(())
    }

    /// Checks every block and builds the grid, parameters and noise basis.
    pub fn setup(&self) -> Result<RunSetup, IoError> {
        let grid = FourierGrid::new(self.n)?;
        let params = self.model.forcing.build(&grid, self.model.epsilon)?;
        let basis = NoiseBasis::build(&grid, &self.noise).map_err(|e| IoError::Config(e.to_string()))?;
        self.schedule.validate()?;
        let e = &self.ergodicity;
        if !(0.0..1.0).contains(&e.burn_in_fraction) || e.windows < 2 || !(e.sigmas > 0.0) {
            return Err(IoError::Config("ergodicity block out of range".into()));
        }
        if self.ensemble.paths == 0 {
            return Err(IoError::Config("ensemble needs at least one path".into()));
        }
        if self.coupling.shell > 0 {
            self.coupling.validate(&LowModeProjector::new(&grid, self.coupling.shell)?)?;
        }
        Ok(RunSetup { grid, params, basis })
    }

    /// Initial state of `path`: the snapshot if one is given, otherwise
    /// random data seeded by `initial.seed + path`.
    pub fn initial_state(&self, grid: &Arc<FourierGrid>, path: u64) -> Result<SystemState, IoError> {
        match &self.initial_snapshot {
            Some(p) => {
                let s = super::read_state(p)?;
                if s.grid().n() != grid.n() {
                    return Err(IoError::Config(format!("snapshot grid n = {} differs from n = {}", s.grid().n(), grid.n())));
                }
                Ok(s)
            }
            None => Ok(random_state(
                grid,
                &InitialData {
                    seed: self.initial.seed.wrapping_add(path),
                    ..self.initial.clone()
                },
            )),
        }
    }
}
