//! Randomized sweeps that produce the frozen constants.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    calibrate_c0, calibrate_commutator, calibrate_poincare, calibrate_riesz_l4, tail_constants, Constants,
    LedgerSettings, SweepResult, SAFETY,
};
use crate::dynamics::{random_state, CflPolicy, run_ensemble, DynamicsError, ForcingSpec, InitialData, ModelParams, StepSchedule};
use crate::ergodicity::{required_moment_constants, MomentConstants};
use crate::noise::{NoiseBand, NoiseBasis, NoiseConfig};
use crate::spectral::FourierGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    pub n: usize,
    /// Random fields per static sweep.
    pub samples: usize,
    pub seed: u64,
    /// Paths per moment regime.
    pub moment_paths: u64,
    pub moment_t_end: f64,
    pub dt: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            n: 32,
            samples: 1000,
            seed: 1,
            moment_paths: 8,
            moment_t_end: 10.0,
            dt: 0.01,
        }
    }
}

/// A forced zero-potential configuration used by the moment sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRegime {
    /// Amplitude of both noise bands (`|k|² ≤ 4`, `α = 2`).
    pub sigma: f64,
    /// Kolmogorov forcing amplitude in wavenumber 1.
    pub forcing: f64,
    /// `L²` norm of both initial fields.
    pub initial: f64,
}

pub const MOMENT_REGIMES: [MomentRegime; 6] = [
    MomentRegime { sigma: 0.5, forcing: 0.0, initial: 0.0 },
    MomentRegime { sigma: 0.5, forcing: 1.0, initial: 2.0 },
    MomentRegime { sigma: 1.0, forcing: 0.0, initial: 1.0 },
    MomentRegime { sigma: 1.0, forcing: 1.0, initial: 1.0 },
    MomentRegime { sigma: 2.0, forcing: 0.5, initial: 0.0 },
    MomentRegime { sigma: 2.0, forcing: 1.0, initial: 3.0 },
];

impl MomentRegime {
    pub fn noise_config(&self) -> NoiseConfig {
        let band = NoiseBand {
            max_shell: 4,
            sigma: self.sigma,
            alpha: 2.0,
        };
        NoiseConfig {
            charge: Some(band.clone()),
            velocity: Some(band),
            modes: vec![],
        }
    }

    pub fn setup(&self, grid: &Arc<FourierGrid>) -> Result<(ModelParams, NoiseBasis), DynamicsError> {
        let params = ForcingSpec {
            kolmogorov: (self.forcing > 0.0).then_some((self.forcing, 1)),
            potential: None,
        }
        .build(grid, 0.0)?;
        let basis = NoiseBasis::build(grid, &self.noise_config())
            .map_err(|e| DynamicsError::InvalidParams(e.to_string()))?;
        Ok((params, basis))
    }

    pub fn initial_data(&self, seed: u64) -> InitialData {
        InitialData {
            charge_l2: self.initial,
            velocity_l2: self.initial,
            seed,
            ..Default::default()
        }
    }
}

/// Raw sweep extrema behind a [`Constants`] value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationLog {
    pub settings: CalibrationSettings,
    pub c0: SweepResult,
    pub commutator: SweepResult,
    pub poincare: SweepResult,
    pub riesz_l4: SweepResult,
    pub moments: Vec<(MomentRegime, MomentConstants)>,
}

/// Largest moment constants over the regimes.
pub fn calibrate_moments(settings: &CalibrationSettings) -> Result<Vec<(MomentRegime, MomentConstants)>, DynamicsError> {
    let grid = FourierGrid::new(settings.n)?;
    let schedule = StepSchedule::new(settings.dt, settings.moment_t_end).with_ledger_stride(10);
    MOMENT_REGIMES
        .iter()
        .enumerate()
        .map(|(i, regime)| {
            let (params, basis) = regime.setup(&grid)?;
            let seed = settings.seed.wrapping_add(1000 * i as u64);
            let init = |path: u64| random_state(&grid, &regime.initial_data(seed + path));
            let runs = run_ensemble(
                &params,
                &basis,
                &schedule,
                &LedgerSettings::default(),
                seed,
                0..settings.moment_paths,
                &init,
                CflPolicy::Substep,
            )?;
            let ledgers: Vec<_> = runs.into_iter().map(|t| t.ledger).collect();
            let c = required_moment_constants(&ledgers).expect("non-empty ensemble");
            Ok((*regime, c))
        })
        .collect()
}

/// Runs every sweep and freezes each extremum with the safety factor.
pub fn calibrate(settings: &CalibrationSettings) -> Result<(Constants, CalibrationLog), DynamicsError> {
    let grid = FourierGrid::new(settings.n)?;
    let s = settings.seed;
    let c0 = calibrate_c0(&grid, settings.samples, s);
    let commutator = calibrate_commutator(&grid, settings.samples, s + 1);
    let poincare = calibrate_poincare(&grid, settings.samples, s + 2);
    let riesz_l4 = calibrate_riesz_l4(&grid, settings.samples, s + 3);
    let moments = calibrate_moments(settings)?;
    let worst = |f: fn(&MomentConstants) -> f64| SAFETY * moments.iter().map(|(_, c)| f(c)).fold(0.0f64, f64::max);
    let constants = Constants {
        c0: c0.frozen(),
        commutator: commutator.frozen(),
        poincare_min: poincare.extremum,
        riesz_l4: riesz_l4.frozen(),
        moment_l4_c4: worst(|c| c.c4),
        moment_l4_c12: worst(|c| c.c12),
        moment_grad_u_c: worst(|c| c.grad_velocity),
        tails: tail_constants(poincare.extremum, riesz_l4.extremum),
    };
    Ok((
        constants,
        CalibrationLog {
            settings: settings.clone(),
            c0,
            commutator,
            poincare,
            riesz_l4,
            moments,
        },
    ))
}
