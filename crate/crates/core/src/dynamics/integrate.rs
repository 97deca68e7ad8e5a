use serde::{Deserialize, Serialize};

use super::{DynamicsError, ModelParams, Stepper, SystemState};
use crate::diagnostics::{EnergyLedger, LedgerRecorder, LedgerSettings};
use crate::noise::{IncrementStream, NoiseBasis};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub dt: f64,
    /// Final time `T`.
    pub t_end: f64,
    /// Snapshot every this many steps; 0 disables snapshots.
    #[serde(default)]
    pub snapshot_stride: usize,
    /// Ledger row every this many steps.
    #[serde(default = "one")]
    pub ledger_stride: usize,
}

fn one() -> usize {
    1
}

impl StepSchedule {
    pub fn new(dt: f64, t_end: f64) -> Self {
        StepSchedule {
            dt,
            t_end,
            snapshot_stride: 0,
            ledger_stride: 1,
        }
    }

    pub fn with_ledger_stride(mut self, stride: usize) -> Self {
        self.ledger_stride = stride;
        self
    }

    pub fn with_snapshot_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::InvalidSchedule(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(DynamicsError::InvalidSchedule(format!("T = {} must be ≥ 0", self.t_end)));
        }
        if self.ledger_stride == 0 {
            return Err(DynamicsError::InvalidSchedule("ledger stride must be ≥ 1".into()));
        }
        Ok(())
    }

    /// `⌊T/dt⌋`, tolerant to rounding in `T/dt`.
    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt + 1e-9).floor() as u64
    }
}

/// Output of [`integrate`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub ledger: EnergyLedger,
    pub snapshots: Vec<SystemState>,
    pub final_state: SystemState,
    pub cfl_events: u64,
}

/// Integrates from `state0`, storing snapshots in memory.
pub fn integrate(
    state0: &SystemState,
    params: &ModelParams,
    basis: &NoiseBasis,
    schedule: &StepSchedule,
    stream: &mut IncrementStream,
) -> Result<Trajectory, DynamicsError> {
    let mut snapshots = Vec::new();
    let mut traj = integrate_with(
        state0,
        params,
        basis,
        schedule,
        stream,
        &LedgerSettings::default(),
        &mut Stepper::new(params),
        &mut |s: &SystemState| snapshots.push(s.clone()),
    )?;
    traj.snapshots = snapshots;
    Ok(traj)
}

/// Integrates from `state0`, handing each snapshot to `on_snapshot`.
///
/// Snapshots are taken at step 0 and every `snapshot_stride` steps; ledger
/// rows at step 0 and every `ledger_stride` steps.
#[allow(clippy::too_many_arguments)]
pub fn integrate_with(
    state0: &SystemState,
    params: &ModelParams,
    basis: &NoiseBasis,
    schedule: &StepSchedule,
    stream: &mut IncrementStream,
    settings: &LedgerSettings,
    stepper: &mut Stepper,
    on_snapshot: &mut dyn FnMut(&SystemState),
) -> Result<Trajectory, DynamicsError> {
    schedule.validate()?;
    params.validate()?;
    let dt = schedule.dt;
    let mut recorder = LedgerRecorder::new(params, basis, settings);
    {
        let meta = recorder.meta_mut();
        meta.dt = dt;
        meta.stride = schedule.ledger_stride;
        meta.seed = stream.seed;
        meta.path = stream.path;
    }
    let mut state = state0.clone();
    let mut rows = vec![recorder.record(&state)];
    if schedule.snapshot_stride > 0 {
        on_snapshot(&state);
    }
    let t0 = state0.t;
    for i in 1..=schedule.steps() {
        let inc = stream.sample_increments(basis.len());
        if !basis.is_empty() {
            let (dq, du) = basis.apply(&inc);
            recorder.add_martingale(&state, &dq, &du);
        }
        state = stepper.step(&state, basis, &inc, dt)?;
        state.t = t0 + i as f64 * dt;
        if i % schedule.ledger_stride as u64 == 0 {
            rows.push(recorder.record(&state));
        }
        if schedule.snapshot_stride > 0 && i % schedule.snapshot_stride as u64 == 0 {
            on_snapshot(&state);
        }
    }
    Ok(Trajectory {
        ledger: EnergyLedger {
            meta: recorder.meta().clone(),
            rows,
        },
        snapshots: Vec::new(),
        final_state: state,
        cfl_events: stepper.cfl_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{random_state, InitialData};
    use crate::spectral::FourierGrid;

    #[test]
    fn zero_time_gives_one_row() {
        let g = FourierGrid::new(16).unwrap();
        let s = SystemState::zeros(&g);
        let mut stream = IncrementStream::new(0, 0, 0.01);
        let tr = integrate(&s, &ModelParams::zero(&g), &NoiseBasis::empty(&g), &StepSchedule::new(0.01, 0.0), &mut stream)
            .unwrap();
        assert_eq!(tr.ledger.rows.len(), 1);
        assert_eq!(tr.final_state, s);
    }

    #[test]
    fn row_count_follows_stride() {
        let g = FourierGrid::new(16).unwrap();
        let s = random_state(&g, &InitialData { charge_l2: 0.5, velocity_l2: 0.5, ..Default::default() });
        let sched = StepSchedule::new(0.01, 0.5).with_ledger_stride(7).with_snapshot_stride(10);
        let mut stream = IncrementStream::new(0, 0, 0.01);
        let tr = integrate(&s, &ModelParams::zero(&g), &NoiseBasis::empty(&g), &sched, &mut stream).unwrap();
        assert_eq!(tr.ledger.rows.len(), 50 / 7 + 1);
        assert_eq!(tr.snapshots.len(), 6);
        assert!(tr.ledger.rows.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn deterministic_energy_nonincreasing() {
        let g = FourierGrid::new(16).unwrap();
        let s = random_state(&g, &InitialData { charge_l2: 2.0, velocity_l2: 2.0, seed: 3, ..Default::default() });
        let mut stream = IncrementStream::new(0, 0, 0.005);
        let tr = integrate(&s, &ModelParams::zero(&g), &NoiseBasis::empty(&g), &StepSchedule::new(0.005, 1.0), &mut stream)
            .unwrap();
        assert!(tr.ledger.rows.windows(2).all(|w| w[1].energy <= w[0].energy));
    }

    #[test]
    fn invalid_schedule_rejected() {
        let g = FourierGrid::new(16).unwrap();
        let mut stream = IncrementStream::new(0, 0, 0.01);
        let r = integrate(
            &SystemState::zeros(&g),
            &ModelParams::zero(&g),
            &NoiseBasis::empty(&g),
            &StepSchedule::new(-1.0, 1.0),
            &mut stream,
        );
        assert!(matches!(r, Err(DynamicsError::InvalidSchedule(_))));
    }
}
