use std::sync::Arc;

use log::warn;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::drift::Nonlinear;
use super::{DynamicsError, ModelParams, SystemState};
use crate::noise::{LinearPropagator, NoiseBasis, StochasticConvolution};
use crate::spectral::{leray_project_in_place, FourierGrid, ScalarField, VectorField};

/// What to do when `dt·max|u| > ½Δx` or `dt·max|u|²·k_c > 1`, with `k_c`
/// the dealiasing cutoff.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CflPolicy {
    /// Log a warning and take the step anyway.
    #[default]
    Warn,
    /// Split the step into enough equal substeps.
    Substep,
    Ignore,
}

const CFL_NUMBER: f64 = 0.5;
const BLOWUP_BOUND: f64 = 1e150;

/// Reusable exponential Euler–Maruyama integrator for fixed parameters.
///
/// One step is `x ← e^{-m dt}(x + dt·N(x) + ĝ·ΔW)` per Fourier mode,
/// with `m = |k| + ε|k|²` for the charge and `m = |k|²` for the velocity.
#[derive(Clone, Debug)]
pub struct Stepper {
    grid: Arc<FourierGrid>,
    nonlinear: Nonlinear,
    epsilon: f64,
    propagators: Vec<LinearPropagator>,
    pub cfl: CflPolicy,
    /// Number of steps that violated the CFL bound.
    pub cfl_events: u64,
}

impl Stepper {
    pub fn new(params: &ModelParams) -> Self {
        Stepper {
            grid: params.grid().clone(),
            nonlinear: Nonlinear::new(params),
            epsilon: params.epsilon,
            propagators: Vec::new(),
            cfl: CflPolicy::default(),
            cfl_events: 0,
        }
    }

    pub fn with_cfl(mut self, cfl: CflPolicy) -> Self {
        self.cfl = cfl;
        self
    }

    pub fn grid(&self) -> &Arc<FourierGrid> {
        &self.grid
    }

    fn propagator(&mut self, dt: f64) -> LinearPropagator {
        if let Some(p) = self.propagators.iter().find(|p| p.dt == dt) {
            return p.clone();
        }
        let p = LinearPropagator::new(&self.grid, dt, self.epsilon);
        if self.propagators.len() > 4 {
            self.propagators.remove(0);
        }
        self.propagators.push(p.clone());
        p
    }

    /// Advances `state` by `dt` with the increments `ΔW` of `basis`.
    pub fn step(
        &mut self,
        state: &SystemState,
        basis: &NoiseBasis,
        increments: &[f64],
        dt: f64,
    ) -> Result<SystemState, DynamicsError> {
        let (nq, nu, speed) = self.nonlinear.evaluate(&state.q, &state.u);
        let substeps = self.substeps(speed, dt, state.t);
        let (mut q, mut u) = (state.q.clone(), state.u.clone());
        basis.accumulate(increments, &mut q, &mut u);
        if substeps == 1 {
            self.advance(&mut q, &mut u, &nq, &nu, dt);
        } else {
            let h = dt / substeps as f64;
            self.advance(&mut q, &mut u, &nq, &nu, h);
            for _ in 1..substeps {
                let (nq, nu, _) = self.nonlinear.evaluate(&q, &u);
                self.advance(&mut q, &mut u, &nq, &nu, h);
            }
        }
        self.finish(state, q, u, dt)
    }

    /// Advances the shifted pair `(Q, U) = (q − φ̃, u − φ)`.
    ///
    /// `sc` must be at the same time as `state`. It is first advanced with
    /// `increments`; the drift is then evaluated at `(Q + φ̃, U + φ)` using
    /// the updated convolution, so the step for `(Q, U)` is deterministic
    /// once the path of `(φ̃, φ)` is known.
    pub fn step_pathwise(
        &mut self,
        state: &SystemState,
        sc: &mut StochasticConvolution,
        basis: &NoiseBasis,
        increments: &[f64],
        dt: f64,
    ) -> Result<SystemState, DynamicsError> {
        if (sc.t - state.t).abs() > 1e-9 * dt.max(1.0) {
            return Err(DynamicsError::NotSynchronized { sc: sc.t, state: state.t });
        }
        sc.update(basis, increments, dt);
        let qe = &state.q + &sc.charge;
        let ue = &state.u + &sc.velocity;
        let (nq, nu, speed) = self.nonlinear.evaluate(&qe, &ue);
        let substeps = self.substeps(speed, dt, state.t);
        let (mut q, mut u) = (state.q.clone(), state.u.clone());
        if substeps == 1 {
            self.advance(&mut q, &mut u, &nq, &nu, dt);
        } else {
            let h = dt / substeps as f64;
            self.advance(&mut q, &mut u, &nq, &nu, h);
            for _ in 1..substeps {
                let (nq, nu, _) = self.nonlinear.evaluate(&(&q + &sc.charge), &(&u + &sc.velocity));
                self.advance(&mut q, &mut u, &nq, &nu, h);
            }
        }
        self.finish(state, q, u, dt)
    }

    /// Evaluates the nonlinear part only: `(−u·∇q + ΔΦ, P[−u·∇u − qRq − q∇Φ + f])`.
    pub fn nonlinear_drift(&self, q: &ScalarField, u: &VectorField) -> (ScalarField, VectorField) {
        let (nq, mut nu, _) = self.nonlinear.evaluate(q, u);
        leray_project_in_place(&mut nu);
        (nq, nu)
    }

    fn substeps(&mut self, speed: f64, dt: f64, t: f64) -> usize {
        // explicit advection against the first-order damping e^{-|k|dt} of
        // the charge is stable only while dt·max|u|²·k_c stays below 2
        let ratio = (speed * dt / (CFL_NUMBER * self.grid.spacing()))
            .max(speed * speed * dt * self.grid.dealias_cutoff() as f64);
        if ratio <= 1.0 || self.cfl == CflPolicy::Ignore {
            return 1;
        }
        self.cfl_events += 1;
        match self.cfl {
            CflPolicy::Substep => (ratio.ceil() as usize).max(1),
            _ => {
                if self.cfl_events == 1 {
                    warn!("step-size bound exceeded by {ratio:.2}x at t = {t:.4} (max|u| = {speed:.3e})");
                }
                1
            }
        }
    }

    /// `x ← e^{-m h}(x + h·N)` with `N` projected.
    fn advance(&mut self, q: &mut ScalarField, u: &mut VectorField, nq: &ScalarField, nu: &VectorField, h: f64) {
        let prop = self.propagator(h);
        q.axpy(h, nq);
        u.axpy(h, nu);
        leray_project_in_place(u);
        prop.apply_charge(q);
        prop.apply_velocity(u);
    }

    fn finish(&self, prev: &SystemState, mut q: ScalarField, mut u: VectorField, dt: f64) -> Result<SystemState, DynamicsError> {
        q.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
        leray_project_in_place(&mut u);
        let bounded = q.is_finite() && u.is_finite() && q.max_abs_coeff() < BLOWUP_BOUND && u.max_abs_coeff() < BLOWUP_BOUND;
        if !bounded {
            return Err(DynamicsError::BlowUp {
                t: prev.t + dt,
                last_valid: Box::new(prev.clone()),
            });
        }
        Ok(SystemState { q, u, t: prev.t + dt })
    }
}

/// One step of the system; see [`Stepper::step`].
pub fn step(
    state: &SystemState,
    params: &ModelParams,
    basis: &NoiseBasis,
    increments: &[f64],
    dt: f64,
) -> Result<SystemState, DynamicsError> {
    Stepper::new(params).step(state, basis, increments, dt)
}

/// One step of the shifted system; see [`Stepper::step_pathwise`].
pub fn step_pathwise(
    state: &SystemState,
    sc: &mut StochasticConvolution,
    params: &ModelParams,
    basis: &NoiseBasis,
    increments: &[f64],
    dt: f64,
) -> Result<SystemState, DynamicsError> {
    Stepper::new(params).step_pathwise(state, sc, basis, increments, dt)
}

/// `(q, u) = (Q + φ̃, U + φ)`.
pub fn reconstruct(state: &SystemState, sc: &StochasticConvolution) -> SystemState {
    SystemState {
        q: &state.q + &sc.charge,
        u: &state.u + &sc.velocity,
        t: state.t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{IncrementStream, NoiseBand, NoiseConfig};
    use crate::spectral::homogeneous_norm_sq;

    fn smooth_state(g: &Arc<FourierGrid>, amp: f64) -> SystemState {
        let q = &ScalarField::cos_mode(g, 1, 2, amp).unwrap() + &ScalarField::sin_mode(g, 2, -1, 0.5 * amp).unwrap();
        let u = VectorField {
            x: ScalarField::cos_mode(g, 0, 1, amp).unwrap(),
            y: &ScalarField::sin_mode(g, 1, 0, amp).unwrap() + &ScalarField::cos_mode(g, 1, 1, 0.3 * amp).unwrap(),
        };
        SystemState::new(q, u, 0.0).unwrap()
    }

    #[test]
    fn linear_mode_decays_exactly() {
        let g = FourierGrid::new(16).unwrap();
        let q = ScalarField::cos_mode(&g, 3, 4, 1.0).unwrap();
        let s = SystemState::new(q.clone(), VectorField::zeros(&g), 0.0).unwrap();
        let p = ModelParams::zero(&g);
        let out = step(&s, &p, &NoiseBasis::empty(&g), &[], 0.01).unwrap();
        let expect = q.coeff(3, 4) * (-5.0f64 * 0.01).exp();
        assert!((out.q.coeff(3, 4) - expect).norm() < 1e-16);
        assert!((out.t - 0.01).abs() < 1e-16);
    }

    #[test]
    fn drift_free_step_matches_convolution() {
        let g = FourierGrid::new(16).unwrap();
        let cfg = NoiseConfig {
            charge: Some(NoiseBand { max_shell: 4, sigma: 1.0, alpha: 1.0 }),
            velocity: Some(NoiseBand { max_shell: 2, sigma: 0.5, alpha: 1.0 }),
            modes: vec![],
        };
        let basis = NoiseBasis::build(&g, &cfg).unwrap();
        let mut stream = IncrementStream::new(3, 0, 0.01);
        let mut sc = StochasticConvolution::new(&g);
        // zero-drift integrator: advance the linear part and noise only
        let mut st = Stepper::new(&ModelParams::zero(&g));
        let (mut q, mut u) = (ScalarField::zeros(&g), VectorField::zeros(&g));
        for _ in 0..50 {
            let dw = stream.sample_increments(basis.len());
            basis.accumulate(&dw, &mut q, &mut u);
            st.advance(&mut q, &mut u, &ScalarField::zeros(&g), &VectorField::zeros(&g), 0.01);
            sc.update(&basis, &dw, 0.01);
        }
        assert!((&q - &sc.charge).max_abs_coeff() < 1e-12);
        assert!((&u - &sc.velocity).max_abs_coeff() < 1e-12);
    }

    #[test]
    fn invariants_hold_after_steps() {
        let g = FourierGrid::new(16).unwrap();
        let mut p = ModelParams::zero(&g);
        p.potential = ScalarField::cos_mode(&g, 1, 0, 0.5).unwrap();
        p.forcing.x = ScalarField::sin_mode(&g, 0, 1, 1.0).unwrap();
        let basis = NoiseBasis::build(
            &g,
            &NoiseConfig {
                charge: Some(NoiseBand { max_shell: 2, sigma: 0.3, alpha: 2.0 }),
                velocity: Some(NoiseBand { max_shell: 2, sigma: 0.3, alpha: 2.0 }),
                modes: vec![],
            },
        )
        .unwrap();
        let mut st = Stepper::new(&p);
        let mut stream = IncrementStream::new(11, 0, 0.01);
        let mut s = smooth_state(&g, 0.5);
        for _ in 0..20 {
            s = st.step(&s, &basis, &stream.sample_increments(basis.len()), 0.01).unwrap();
            assert_eq!(s.q.coeffs()[0], Complex64::new(0.0, 0.0));
            assert!(s.u.divergence_residual() < 1e-14);
            assert!(s.q.hermitian_residual() < 1e-14);
        }
    }

    #[test]
    fn charge_l2_nonincreasing_without_sources() {
        let g = FourierGrid::new(16).unwrap();
        let p = ModelParams::zero(&g);
        let mut st = Stepper::new(&p);
        let mut s = smooth_state(&g, 1.0);
        let mut last = s.q.l2_norm_sq();
        for _ in 0..100 {
            s = st.step(&s, &NoiseBasis::empty(&g), &[], 0.005).unwrap();
            let now = s.q.l2_norm_sq();
            assert!(now <= last * (1.0 + 1e-12));
            last = now;
        }
    }

    #[test]
    fn one_step_consistency() {
        // (x(dt) − e^{L dt}x)/dt → N(x) at first order
        let g = FourierGrid::new(16).unwrap();
        let p = ModelParams::zero(&g);
        let s = smooth_state(&g, 1.0);
        let st = Stepper::new(&p);
        let (nq, _) = st.nonlinear_drift(&s.q, &s.u);
        let mut errs = Vec::new();
        for dt in [1e-2, 5e-3] {
            let out = step(&s, &p, &NoiseBasis::empty(&g), &[], dt).unwrap();
            let mut lin = s.q.clone();
            LinearPropagator::new(&g, dt, 0.0).apply_charge(&mut lin);
            let quotient = &(&out.q - &lin) * (1.0 / dt);
            errs.push(homogeneous_norm_sq(&(&quotient - &nq), 0.0).sqrt());
        }
        assert!(errs[0] / errs[1] > 1.8, "{errs:?}");
    }

    #[test]
    fn blow_up_carries_last_state() {
        let g = FourierGrid::new(16).unwrap();
        let p = ModelParams::zero(&g);
        let mut s = smooth_state(&g, 1.0);
        s.q.coeffs_mut()[1] = Complex64::new(f64::NAN, 0.0);
        let err = step(&s, &p, &NoiseBasis::empty(&g), &[], 0.01).unwrap_err();
        match err {
            DynamicsError::BlowUp { t, last_valid } => {
                assert!((t - 0.01).abs() < 1e-15);
                assert_eq!(last_valid.t, 0.0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn pathwise_without_noise_is_direct() {
        let g = FourierGrid::new(16).unwrap();
        let p = ModelParams::zero(&g);
        let basis = NoiseBasis::empty(&g);
        let mut a = Stepper::new(&p);
        let mut b = Stepper::new(&p);
        let mut sc = StochasticConvolution::new(&g);
        let mut s = smooth_state(&g, 1.0);
        let mut w = s.clone();
        for _ in 0..50 {
            s = a.step(&s, &basis, &[], 0.01).unwrap();
            w = b.step_pathwise(&w, &mut sc, &basis, &[], 0.01).unwrap();
        }
        let r = reconstruct(&w, &sc);
        assert!((&r.q - &s.q).max_abs_coeff() < 1e-12);
        assert!((&r.u - &s.u).max_abs_coeff() < 1e-12);
    }

    #[test]
    fn pathwise_requires_synchronized_convolution() {
        let g = FourierGrid::new(16).unwrap();
        let mut sc = StochasticConvolution::new(&g);
        sc.t = 0.5;
        let s = SystemState::zeros(&g);
        let e = step_pathwise(&s, &mut sc, &ModelParams::zero(&g), &NoiseBasis::empty(&g), &[], 0.01);
        assert!(matches!(e, Err(DynamicsError::NotSynchronized { .. })));
    }

    #[test]
    fn substepping_reduces_to_single_step_for_slow_flow() {
        let g = FourierGrid::new(16).unwrap();
        let p = ModelParams::zero(&g);
        let s = smooth_state(&g, 0.1);
        let a = Stepper::new(&p).with_cfl(CflPolicy::Substep).step(&s, &NoiseBasis::empty(&g), &[], 0.01).unwrap();
        let b = step(&s, &p, &NoiseBasis::empty(&g), &[], 0.01).unwrap();
        assert_eq!(a, b);
        let mut fast = Stepper::new(&p).with_cfl(CflPolicy::Substep);
        fast.step(&smooth_state(&g, 10.0), &NoiseBasis::empty(&g), &[], 0.1).unwrap();
        assert_eq!(fast.cfl_events, 1);
    }
}
