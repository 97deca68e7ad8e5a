use std::ops::Range;

use rayon::prelude::*;

use super::{integrate_with, CflPolicy, DynamicsError, ModelParams, StepSchedule, Stepper, SystemState, Trajectory};
use crate::diagnostics::LedgerSettings;
use crate::noise::{IncrementStream, NoiseBasis};

/// Runs one trajectory per path index, in parallel; results are ordered by
/// path and do not depend on the thread count.
pub fn run_ensemble(
    params: &ModelParams,
    basis: &NoiseBasis,
    schedule: &StepSchedule,
    settings: &LedgerSettings,
    seed: u64,
    paths: Range<u64>,
    initial: &(dyn Fn(u64) -> SystemState + Sync),
    cfl: CflPolicy,
) -> Result<Vec<Trajectory>, DynamicsError> {
    schedule.validate()?;
    params.validate()?;
    let paths: Vec<u64> = paths.collect();
    paths
        .par_iter()
        .map(|&path| {
            let mut stream = IncrementStream::new(seed, path, schedule.dt);
            let mut snaps = Vec::new();
            let mut stepper = Stepper::new(params).with_cfl(cfl);
            let mut tr = integrate_with(
                &initial(path),
                params,
                basis,
                schedule,
                &mut stream,
                settings,
                &mut stepper,
                &mut |s: &SystemState| snaps.push(s.clone()),
            )?;
            tr.snapshots = snaps;
            Ok(tr)
        })
        .collect()
}
