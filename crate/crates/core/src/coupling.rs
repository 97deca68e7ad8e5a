//! Asymptotic coupling: a slaved copy driven by the same noise plus a
//! feedback control on the low Fourier modes.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{CflPolicy, DynamicsError, ModelParams, StepSchedule, Stepper, SystemState};
use crate::ergodicity::linear_fit;
use crate::noise::{IncrementStream, NoiseBasis};
use crate::spectral::{FourierGrid, ScalarField, VectorField};

#[derive(Debug, Error, Clone)]
pub enum CouplingError {
    #[error("shell {shell} exceeds the resolvable range (|k|² ≤ {max})")]
    ShellTooLarge { shell: u32, max: u32 },
    #[error("gain λ = {lambda} is below √λ_(N+1) = {required} in strict mode")]
    GainTooSmall { lambda: f64, required: f64 },
    #[error("noise does not reach every controlled mode (|k|² ≤ {0})")]
    RangeCondition(u32),
    #[error("invalid coupling configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    /// Controlled modes are those with `|k|² ≤ shell`.
    pub shell: u32,
    /// Feedback gain `λ`.
    pub lambda: f64,
    /// Cost budget `K` for `τ_K`.
    pub budget: f64,
    /// Tail-event threshold `R`.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Require `λ ≥ √λ_(N+1)`.
    #[serde(default)]
    pub strict: bool,
}

fn default_radius() -> f64 {
    1.0
}

impl CouplingConfig {
    pub fn validate(&self, projector: &LowModeProjector) -> Result<(), CouplingError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(CouplingError::Invalid(format!("λ = {} must be finite and ≥ 0", self.lambda)));
        }
        if !(self.budget > 0.0) {
            return Err(CouplingError::Invalid(format!("K = {} must be positive", self.budget)));
        }
        let required = projector.lambda_next.sqrt();
        if self.strict && self.lambda < required {
            return Err(CouplingError::GainTooSmall {
                lambda: self.lambda,
                required,
            });
        }
        Ok(())
    }
}

/// Orthogonal projection onto the eigenfunctions of `(−Δ, −PΔ)` with
/// eigenvalue at most `shell`.
///
/// Whole shells are kept or dropped, so no tie-break inside a shell is
/// needed; `count` is the implied `N`.
#[derive(Clone, Debug)]
pub struct LowModeProjector {
    pub shell: u32,
    /// Real dimension of the controlled subspace, both components.
    pub count: usize,
    /// `λ_(N+1)`: the smallest `|k|²` above `shell`.
    pub lambda_next: f64,
    controlled: Vec<usize>,
    k_sq: Vec<f64>,
}

/// Smallest sum of two squares strictly above `m`.
pub fn next_eigenvalue(m: u32) -> u32 {
    (m + 1..)
        .find(|&v| (0..=((v as f64).sqrt() as u32)).any(|a| {
            let r = v - a * a;
            let b = (r as f64).sqrt().round() as u32;
            b * b == r
        }))
        .expect("sums of two squares are unbounded")
}

impl LowModeProjector {
    pub fn new(grid: &Arc<FourierGrid>, shell: u32) -> Result<Self, CouplingError> {
        let c = grid.dealias_cutoff();
        let max = (c * c) as u32;
        let lambda_next = next_eigenvalue(shell);
        if lambda_next > max {
            return Err(CouplingError::ShellTooLarge { shell, max });
        }
        let k_sq = grid.k_sq().to_vec();
        let controlled: Vec<usize> = (1..grid.len()).filter(|&i| k_sq[i] <= shell as f64).collect();
        Ok(LowModeProjector {
            shell,
            count: 2 * controlled.len() - controlled.iter().filter(|&&i| grid.is_nyquist(i)).count(),
            lambda_next: lambda_next as f64,
            controlled,
            k_sq,
        })
    }

    /// The `N = 0` projector.
    pub fn none(grid: &Arc<FourierGrid>) -> Self {
        LowModeProjector {
            shell: 0,
            count: 0,
            lambda_next: 1.0,
            controlled: Vec::new(),
            k_sq: grid.k_sq().to_vec(),
        }
    }

    fn mask_scalar(&self, f: &ScalarField, keep_low: bool) -> ScalarField {
        let mut out = if keep_low { ScalarField::zeros(f.grid()) } else { f.clone() };
        for &i in &self.controlled {
            out.coeffs_mut()[i] = if keep_low { f.coeffs()[i] } else { Complex64::new(0.0, 0.0) };
        }
        out
    }

    fn mask(&self, s: &SystemState, keep_low: bool) -> SystemState {
        SystemState {
            q: self.mask_scalar(&s.q, keep_low),
            u: VectorField {
                x: self.mask_scalar(&s.u.x, keep_low),
                y: self.mask_scalar(&s.u.y, keep_low),
            },
            t: s.t,
        }
    }

    /// `P_N` applied to the pair (acts mode-wise, so it commutes with `Λ^{-1/2}`).
    pub fn low(&self, s: &SystemState) -> SystemState {
        self.mask(s, true)
    }

    /// `Q_N = I − P_N`.
    pub fn high(&self, s: &SystemState) -> SystemState {
        self.mask(s, false)
    }

    /// `‖P_N(Λ^{-1/2}ξ, v)‖²`
    pub fn low_norm_sq(&self, s: &SystemState) -> f64 {
        self.low(s).energy()
    }

    /// Both sides of `‖Q_N(Λ^{-1/2}ρ, v)‖² ≤ λ_(N+1)^{-1/2}‖(ρ, ∇v)‖²`.
    pub fn gp_check(&self, s: &SystemState) -> GpReport {
        let lhs = self.high(s).energy();
        let k_sq = &self.k_sq;
        let rhs = (s.q.l2_norm_sq() + s.u.weighted_norm_sq(|i| k_sq[i])) / self.lambda_next.sqrt();
        GpReport {
            lhs,
            rhs,
            holds: lhs <= rhs * (1.0 + 1e-12),
        }
    }

    /// Blends the controlled modes of `slaved` towards `primary`:
    /// `ω ← e^{−λh} ω` on `P_N`, the exact flow of `∂ω = −λP_Nω`.
    fn relax(&self, primary: &SystemState, slaved: &mut SystemState, decay: f64) {
        let blend = |p: &ScalarField, s: &mut ScalarField| {
            for &i in &self.controlled {
                let pc = p.coeffs()[i];
                let sc = s.coeffs()[i];
                s.coeffs_mut()[i] = pc - (pc - sc) * decay;
            }
        };
        blend(&primary.q, &mut slaved.q);
        blend(&primary.u.x, &mut slaved.u.x);
        blend(&primary.u.y, &mut slaved.u.y);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// One coupling-ledger sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub t: f64,
    /// `‖ω‖²_Ḣ = ‖Λ^{-1/2}(q − Q)‖² + ‖u − U‖²`
    pub omega_sq: f64,
    /// `∫ λ²‖P_N ω‖²_Ḣ` while the feedback is on.
    pub cost: f64,
    pub tau_hit: bool,
    pub feedback: bool,
}

impl CouplingRow {
    pub const COLUMNS: [&'static str; 5] = ["t", "omega_sq", "cost", "tau_hit", "feedback"];
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingLedger {
    pub rows: Vec<CouplingRow>,
    /// `τ_K`, if it was reached.
    pub tau_k: Option<f64>,
}

impl CouplingLedger {
    pub fn write_csv(&self, w: &mut dyn std::io::Write) -> std::io::Result<()> {
        writeln!(w, "{}", CouplingRow::COLUMNS.join(","))?;
        for r in &self.rows {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{},{}",
                r.t, r.omega_sq, r.cost, r.tau_hit as u8, r.feedback as u8
            )?;
        }
        Ok(())
    }

    /// Decay rate `−d/dt log‖ω‖²` fitted over rows with
    /// `‖ω‖²/‖ω₀‖² > 1e−24`.
    pub fn decay_rate(&self) -> f64 {
        let w0 = match self.rows.first() {
            Some(r) if r.omega_sq > 0.0 => r.omega_sq,
            _ => return 0.0,
        };
        let (t, y): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| r.omega_sq / w0 > 1e-24)
            .map(|r| (r.t, (r.omega_sq / w0).ln()))
            .unzip();
        if t.len() < 2 {
            return f64::INFINITY;
        }
        -linear_fit(&t, &y).1
    }

    pub fn final_ratio(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) if a.omega_sq > 0.0 => b.omega_sq / a.omega_sq,
            _ => 0.0,
        }
    }
}

/// The primary and slaved states with the running control cost.
#[derive(Clone, Debug)]
pub struct CoupledPair {
    pub primary: SystemState,
    pub slaved: SystemState,
    pub cost: f64,
    pub tau_k: Option<f64>,
}

impl CoupledPair {
    pub fn new(primary: SystemState, slaved: SystemState) -> Self {
        CoupledPair {
            primary,
            slaved,
            cost: 0.0,
            tau_k: None,
        }
    }

    pub fn omega(&self) -> SystemState {
        self.primary.difference(&self.slaved)
    }

    pub fn row(&self, feedback: bool) -> CouplingRow {
        CouplingRow {
            t: self.primary.t,
            omega_sq: self.omega().energy(),
            cost: self.cost,
            tau_hit: self.tau_k.is_some(),
            feedback,
        }
    }
}

/// Advances both systems with the same increments; the slaved copy also
/// relaxes its controlled modes towards the primary until `τ_K`.
#[allow(clippy::too_many_arguments)]
pub fn coupled_step(
    pair: &mut CoupledPair,
    stepper: &mut Stepper,
    projector: &LowModeProjector,
    cfg: &CouplingConfig,
    basis: &NoiseBasis,
    increments: &[f64],
    dt: f64,
) -> Result<CouplingRow, CouplingError> {
    let active = pair.tau_k.is_none() && cfg.lambda > 0.0 && projector.count > 0;
    let l2 = cfg.lambda * cfg.lambda;
    let before = if active { l2 * projector.low_norm_sq(&pair.omega()) } else { 0.0 };
    let primary = stepper.step(&pair.primary, basis, increments, dt)?;
    let mut slaved = stepper.step(&pair.slaved, basis, increments, dt)?;
    if active {
        projector.relax(&primary, &mut slaved, (-cfg.lambda * dt).exp());
    }
    pair.primary = primary;
    pair.slaved = slaved;
    if active {
        let after = l2 * projector.low_norm_sq(&pair.omega());
        pair.cost += 0.5 * dt * (before + after);
        if pair.cost >= cfg.budget {
            pair.tau_k = Some(pair.primary.t);
        }
    }
    Ok(pair.row(active))
}

/// Runs one coupled pair over `schedule`, recording every `ledger_stride` steps.
#[allow(clippy::too_many_arguments)]
pub fn run_coupled_pair(
    primary: SystemState,
    slaved: SystemState,
    params: &ModelParams,
    basis: &NoiseBasis,
    cfg: &CouplingConfig,
    schedule: &StepSchedule,
    stream: &mut IncrementStream,
    cfl: CflPolicy,
) -> Result<CouplingLedger, CouplingError> {
    schedule.validate()?;
    let projector = if cfg.shell == 0 {
        LowModeProjector::none(params.grid())
    } else {
        LowModeProjector::new(params.grid(), cfg.shell)?
    };
    cfg.validate(&projector)?;
    let mut stepper = Stepper::new(params).with_cfl(cfl);
    let mut pair = CoupledPair::new(primary, slaved);
    let mut rows = vec![pair.row(cfg.lambda > 0.0 && projector.count > 0)];
    let t0 = pair.primary.t;
    for i in 1..=schedule.steps() {
        let inc = stream.sample_increments(basis.len());
        let mut row = coupled_step(&mut pair, &mut stepper, &projector, cfg, basis, &inc, schedule.dt)?;
        let t = t0 + i as f64 * schedule.dt;
        pair.primary.t = t;
        pair.slaved.t = t;
        row.t = t;
        if i % schedule.ledger_stride as u64 == 0 {
            rows.push(row);
        }
    }
    Ok(CouplingLedger {
        rows,
        tau_k: pair.tau_k,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathContraction {
    pub path: u64,
    pub decay_rate: f64,
    pub final_ratio: f64,
    pub tau_k: Option<f64>,
    pub final_cost: f64,
}

/// Summary of a coupling ensemble.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub shell: u32,
    /// Number of controlled eigenfunctions `N`.
    pub n_modes: usize,
    pub lambda: f64,
    /// `λ_(N+1)`
    pub lambda_next: f64,
    pub budget: f64,
    pub t_end: f64,
    /// Target for `‖ω(T)‖²/‖ω(0)‖²`.
    pub target: f64,
    pub paths: Vec<PathContraction>,
    pub median_decay_rate: f64,
    /// Fraction of paths on which `τ_K = ∞` over the run.
    pub fraction_tau_infinite: f64,
    /// Fraction of paths with final ratio below `target`.
    pub fraction_contracted: f64,
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Runs coupled pairs on `paths` in parallel; `initial(path)` gives the
/// primary and slaved initial states.
#[allow(clippy::too_many_arguments)]
pub fn run_coupling_experiment(
    params: &ModelParams,
    basis: &NoiseBasis,
    cfg: &CouplingConfig,
    schedule: &StepSchedule,
    seed: u64,
    paths: std::ops::Range<u64>,
    initial: &(dyn Fn(u64) -> (SystemState, SystemState) + Sync),
    target: f64,
) -> Result<(ContractionReport, Vec<CouplingLedger>), CouplingError> {
    let projector = if cfg.shell == 0 {
        LowModeProjector::none(params.grid())
    } else {
        LowModeProjector::new(params.grid(), cfg.shell)?
    };
    cfg.validate(&projector)?;
    if cfg.lambda > 0.0 && !basis.covers_shell(cfg.shell) {
        return Err(CouplingError::RangeCondition(cfg.shell));
    }
    let ids: Vec<u64> = paths.collect();
    let ledgers: Vec<CouplingLedger> = ids
        .par_iter()
        .map(|&p| {
            let (a, b) = initial(p);
            let mut stream = IncrementStream::new(seed, p, schedule.dt);
            run_coupled_pair(a, b, params, basis, cfg, schedule, &mut stream, CflPolicy::Substep)
        })
        .collect::<Result<_, _>>()?;
    let per_path: Vec<PathContraction> = ids
        .iter()
        .zip(&ledgers)
        .map(|(&path, l)| PathContraction {
            path,
            decay_rate: l.decay_rate(),
            final_ratio: l.final_ratio(),
            tau_k: l.tau_k,
            final_cost: l.rows.last().map(|r| r.cost).unwrap_or(0.0),
        })
        .collect();
    let m = per_path.len().max(1) as f64;
    let report = ContractionReport {
        shell: cfg.shell,
        n_modes: projector.count,
        lambda: cfg.lambda,
        lambda_next: projector.lambda_next,
        budget: cfg.budget,
        t_end: schedule.t_end,
        target,
        median_decay_rate: median(&per_path.iter().map(|p| p.decay_rate).collect::<Vec<_>>()),
        fraction_tau_infinite: per_path.iter().filter(|p| p.tau_k.is_none()).count() as f64 / m,
        fraction_contracted: per_path.iter().filter(|p| p.final_ratio < target).count() as f64 / m,
        paths: per_path,
    };
    Ok((report, ledgers))
}

/// Contraction reports over increasing shell cutoffs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShellSweep {
    /// Gain used at each shell, in units of `√λ_(N+1)`.
    pub gain_factor: f64,
    /// Fraction of contracted paths counted as typical.
    pub typical_fraction: f64,
    pub reports: Vec<ContractionReport>,
    /// Smallest shell from which every larger swept shell is typical.
    pub threshold: Option<u32>,
}

/// Runs the experiment at each shell with `λ = gain_factor·√λ_(N+1)`.
#[allow(clippy::too_many_arguments)]
pub fn shell_sweep(
    params: &ModelParams,
    basis: &NoiseBasis,
    base: &CouplingConfig,
    shells: &[u32],
    gain_factor: f64,
    schedule: &StepSchedule,
    seed: u64,
    paths: std::ops::Range<u64>,
    initial: &(dyn Fn(u64) -> (SystemState, SystemState) + Sync),
    target: f64,
    typical_fraction: f64,
) -> Result<ShellSweep, CouplingError> {
    let mut reports = Vec::with_capacity(shells.len());
    for &shell in shells {
        let lambda = gain_factor * (next_eigenvalue(shell) as f64).sqrt();
        let cfg = CouplingConfig {
            shell,
            lambda,
            ..base.clone()
        };
        let (r, _) = run_coupling_experiment(params, basis, &cfg, schedule, seed, paths.clone(), initial, target)?;
        reports.push(r);
    }
    let mut threshold = None;
    for r in reports.iter().rev() {
        if r.fraction_contracted >= typical_fraction {
            threshold = Some(r.shell);
        } else {
            break;
        }
    }
    Ok(ShellSweep {
        gain_factor,
        typical_fraction,
        reports,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{random_state, InitialData};

    fn grid() -> Arc<FourierGrid> {
        FourierGrid::new(16).unwrap()
    }

    #[test]
    fn eigenvalue_sequence() {
        assert_eq!(next_eigenvalue(0), 1);
        assert_eq!(next_eigenvalue(1), 2);
        assert_eq!(next_eigenvalue(2), 4);
        assert_eq!(next_eigenvalue(5), 8);
        assert_eq!(next_eigenvalue(16), 17);
        assert_eq!(next_eigenvalue(20), 25);
    }

    #[test]
    fn projector_counts_modes() {
        let p = LowModeProjector::new(&grid(), 1).unwrap();
        // four scalar and four velocity directions on |k| = 1
        assert_eq!(p.count, 8);
        assert_eq!(p.lambda_next, 2.0);
        assert!(LowModeProjector::new(&grid(), 25).is_err());
    }

    #[test]
    fn shell_one_diff_is_fully_controlled() {
        let g = grid();
        let s = SystemState {
            q: ScalarField::cos_mode(&g, 1, 0, 1.0).unwrap(),
            u: VectorField {
                x: ScalarField::sin_mode(&g, 0, 1, 1.0).unwrap(),
                y: ScalarField::zeros(&g),
            },
            t: 0.0,
        };
        let p = LowModeProjector::new(&g, 1).unwrap();
        assert_eq!(p.high(&s).energy(), 0.0);
        assert!((p.low_norm_sq(&s) - s.energy()).abs() < 1e-14);
        let none = LowModeProjector::none(&g);
        assert_eq!(none.low_norm_sq(&s), 0.0);
        assert_eq!(none.high(&s), s);
    }

    #[test]
    fn gp_inequality_and_equality_case() {
        let g = grid();
        let p = LowModeProjector::new(&g, 2).unwrap();
        for seed in 0..10 {
            let s = random_state(&g, &InitialData { charge_l2: 1.0, velocity_l2: 1.0, seed, ..Default::default() });
            assert!(p.gp_check(&s).holds);
        }
        // a scalar eigenfunction at λ_(N+1) = 4 attains equality
        let e = SystemState {
            q: ScalarField::cos_mode(&g, 2, 0, 1.0).unwrap(),
            u: VectorField::zeros(&g),
            t: 0.0,
        };
        let r = p.gp_check(&e);
        assert!((r.lhs - r.rhs).abs() < 1e-14 * r.rhs);
    }

    #[test]
    fn identical_states_stay_coupled() {
        let g = grid();
        let s = random_state(&g, &InitialData { charge_l2: 1.0, velocity_l2: 1.0, ..Default::default() });
        let cfg = CouplingConfig { shell: 2, lambda: 4.0, budget: 1.0, radius: 1.0, strict: false };
        let l = run_coupled_pair(
            s.clone(),
            s,
            &ModelParams::zero(&g),
            &NoiseBasis::empty(&g),
            &cfg,
            &StepSchedule::new(0.01, 0.2),
            &mut IncrementStream::new(0, 0, 0.01),
            CflPolicy::Warn,
        )
        .unwrap();
        assert!(l.rows.iter().all(|r| r.omega_sq == 0.0 && r.cost == 0.0));
        assert!(l.tau_k.is_none());
    }

    #[test]
    fn linear_regime_controlled_mode_rate() {
        // tiny single-mode difference: ω decays at λ + |k|
        let g = grid();
        let q = ScalarField::cos_mode(&g, 1, 0, 1e-8).unwrap();
        let primary = SystemState::zeros(&g);
        let slaved = SystemState { q, u: VectorField::zeros(&g), t: 0.0 };
        let cfg = CouplingConfig { shell: 1, lambda: 3.0, budget: 1e9, radius: 1.0, strict: true };
        let l = run_coupled_pair(
            primary,
            slaved,
            &ModelParams::zero(&g),
            &NoiseBasis::empty(&g),
            &cfg,
            &StepSchedule::new(0.01, 1.0),
            &mut IncrementStream::new(0, 0, 0.01),
            CflPolicy::Warn,
        )
        .unwrap();
        // ‖ω‖² decays at 2(λ + 1)
        assert!((l.decay_rate() - 8.0).abs() < 1e-6);
    }

    #[test]
    fn strict_mode_rejects_small_gain() {
        let g = grid();
        let p = LowModeProjector::new(&g, 4).unwrap();
        let cfg = CouplingConfig { shell: 4, lambda: 1.0, budget: 1.0, radius: 1.0, strict: true };
        assert!(matches!(cfg.validate(&p), Err(CouplingError::GainTooSmall { .. })));
    }

    #[test]
    fn budget_switches_feedback_off() {
        let g = grid();
        let slaved = SystemState { q: ScalarField::cos_mode(&g, 1, 0, 1.0).unwrap(), u: VectorField::zeros(&g), t: 0.0 };
        let cfg = CouplingConfig { shell: 1, lambda: 5.0, budget: 1e-3, radius: 1.0, strict: false };
        let l = run_coupled_pair(
            SystemState::zeros(&g),
            slaved,
            &ModelParams::zero(&g),
            &NoiseBasis::empty(&g),
            &cfg,
            &StepSchedule::new(0.01, 0.5),
            &mut IncrementStream::new(0, 0, 0.01),
            CflPolicy::Warn,
        )
        .unwrap();
        let hit = l.tau_k.expect("budget reached");
        assert!(l.rows.iter().all(|r| r.t <= hit || (!r.feedback && r.tau_hit)));
        assert!(l.rows.windows(2).all(|w| w[1].cost >= w[0].cost));
    }

    #[test]
    fn shared_noise_cancels_in_difference() {
        let g = grid();
        let basis = NoiseBasis::build(
            &g,
            &crate::noise::NoiseConfig {
                charge: Some(crate::noise::NoiseBand { max_shell: 4, sigma: 1.0, alpha: 1.0 }),
                velocity: Some(crate::noise::NoiseBand { max_shell: 4, sigma: 1.0, alpha: 1.0 }),
                modes: vec![],
            },
        )
        .unwrap();
        let a = random_state(&g, &InitialData { charge_l2: 0.5, velocity_l2: 0.5, seed: 1, ..Default::default() });
        let b = random_state(&g, &InitialData { charge_l2: 0.5, velocity_l2: 0.5, seed: 2, ..Default::default() });
        let params = ModelParams::zero(&g);
        let mut stepper = Stepper::new(&params);
        let dt = 1e-3;
        let inc = IncrementStream::new(3, 0, dt).increments_at(0, basis.len());
        let cfg = CouplingConfig { shell: 0, lambda: 0.0, budget: 1.0, radius: 1.0, strict: false };
        let mut pair = CoupledPair::new(a.clone(), b.clone());
        coupled_step(&mut pair, &mut stepper, &LowModeProjector::none(&g), &cfg, &basis, &inc, dt).unwrap();
        let (na, nua) = stepper.nonlinear_drift(&a.q, &a.u);
        let (nb, nub) = stepper.nonlinear_drift(&b.q, &b.u);
        let w = a.difference(&b);
        let (k_abs, k_sq) = (g.k_abs().to_vec(), g.k_sq().to_vec());
        let q = (&w.q + &(&(&na - &nb) * dt)).map_multiplier(|i| (-k_abs[i] * dt).exp());
        let heat = |f: ScalarField| f.map_multiplier(|i| (-k_sq[i] * dt).exp());
        let ux = heat(&w.u.x + &(&(&nua.x - &nub.x) * dt));
        let uy = heat(&w.u.y + &(&(&nua.y - &nub.y) * dt));
        let expected = SystemState { q, u: VectorField { x: ux, y: uy }, t: 0.0 };
        let err = pair.omega().difference(&expected).energy();
        assert!(err <= 1e-20 * w.energy(), "{err}");
    }

    #[test]
    fn budget_sweep_is_monotone() {
        let g = grid();
        let basis = NoiseBasis::build(
            &g,
            &crate::noise::NoiseConfig {
                charge: Some(crate::noise::NoiseBand { max_shell: 2, sigma: 0.5, alpha: 1.0 }),
                velocity: Some(crate::noise::NoiseBand { max_shell: 2, sigma: 0.5, alpha: 1.0 }),
                modes: vec![],
            },
        )
        .unwrap();
        let params = ModelParams::zero(&g);
        let init = |p: u64| {
            let d = |seed| InitialData { charge_l2: 1.0, velocity_l2: 1.0, seed, ..Default::default() };
            (random_state(&g, &d(2 * p)), random_state(&g, &d(2 * p + 1)))
        };
        let schedule = StepSchedule::new(0.01, 0.5);
        let fractions: Vec<f64> = [0.1, 1.0, 10.0, 1e3]
            .iter()
            .map(|&k| {
                let cfg = CouplingConfig { shell: 2, lambda: 4.0, budget: k, radius: 1.0, strict: false };
                run_coupling_experiment(&params, &basis, &cfg, &schedule, 5, 0..6, &init, 1e-3).unwrap().0.fraction_tau_infinite
            })
            .collect();
        assert!(fractions.windows(2).all(|w| w[1] >= w[0]), "{fractions:?}");
        assert_eq!(fractions[3], 1.0);
    }

    #[test]
    fn laminar_regime_contracts_for_every_shell() {
        let g = grid();
        let basis = NoiseBasis::build(
            &g,
            &crate::noise::NoiseConfig {
                charge: Some(crate::noise::NoiseBand { max_shell: 8, sigma: 0.2, alpha: 1.0 }),
                velocity: Some(crate::noise::NoiseBand { max_shell: 8, sigma: 0.2, alpha: 1.0 }),
                modes: vec![],
            },
        )
        .unwrap();
        let params = ModelParams::zero(&g);
        let init = |p: u64| {
            let d = |seed| InitialData { charge_l2: 0.5, velocity_l2: 0.5, seed, ..Default::default() };
            (random_state(&g, &d(2 * p)), random_state(&g, &d(2 * p + 1)))
        };
        let base = CouplingConfig { shell: 1, lambda: 0.0, budget: 1e6, radius: 1.0, strict: true };
        let sweep = shell_sweep(&params, &basis, &base, &[1, 2, 4, 8], 2.0, &StepSchedule::new(0.01, 6.0), 3, 0..4, &init, 1e-3, 0.9)
            .unwrap();
        assert_eq!(sweep.threshold, Some(1));
        let rates: Vec<f64> = sweep.reports.iter().map(|r| r.median_decay_rate).collect();
        assert!(rates.windows(2).all(|w| w[1] >= w[0]), "{rates:?}");
    }

    #[test]
    fn range_condition_is_enforced() {
        let g = grid();
        let params = ModelParams::zero(&g);
        let cfg = CouplingConfig { shell: 2, lambda: 4.0, budget: 1.0, radius: 1.0, strict: false };
        let init = |_: u64| (SystemState::zeros(&g), SystemState::zeros(&g));
        let r = run_coupling_experiment(&params, &NoiseBasis::empty(&g), &cfg, &StepSchedule::new(0.01, 0.1), 0, 0..1, &init, 1e-3);
        assert!(matches!(r, Err(CouplingError::RangeCondition(2))));
    }
}
