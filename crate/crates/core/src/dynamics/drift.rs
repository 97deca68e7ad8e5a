use std::sync::Arc;

use rustfft::num_complex::Complex64;

use super::{ModelParams, SystemState};
use crate::spectral::{
    dealias, dealias_vector, forward_pair, gradient, inverse_pair, laplacian, leray_project,
    riesz_unchecked, FourierGrid, ScalarField, VectorField,
};

/// Right-hand side of the deterministic part of the system.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftValue {
    /// `−u·∇q − Λq − εΛ²q + ΔΦ`
    pub charge: ScalarField,
    /// `−u·∇u − qRq − q∇Φ + f + Δu` before the pressure is removed.
    pub velocity_unprojected: VectorField,
    /// `P[−u·∇u − qRq − q∇Φ + f] + Δu`
    pub velocity: VectorField,
}

/// Full drift at `state`, linear terms included.
pub fn compute_drift(state: &SystemState, params: &ModelParams) -> DriftValue {
    let nl = Nonlinear::new(params);
    let (nq, nu, _) = nl.evaluate(&state.q, &state.u);
    let g = state.grid();
    let eps = params.epsilon;
    let (k_abs, k_sq) = (g.k_abs().to_vec(), g.k_sq().to_vec());
    let damp = state.q.map_multiplier(|i| k_abs[i] + eps * k_sq[i]);
    let charge = &nq - &damp;
    let lap = VectorField {
        x: laplacian(&state.u.x),
        y: laplacian(&state.u.y),
    };
    let velocity_unprojected = &nu + &lap;
    let velocity = &leray_project(&nu) + &lap;
    DriftValue {
        charge,
        velocity_unprojected,
        velocity,
    }
}

/// Quadratic and source terms evaluated pseudo-spectrally with seven
/// complex FFTs per call.
#[derive(Clone, Debug)]
pub(crate) struct Nonlinear {
    grid: Arc<FourierGrid>,
    lap_potential: ScalarField,
    grad_potential: Option<(Vec<f64>, Vec<f64>)>,
    forcing: VectorField,
}

impl Nonlinear {
    pub(crate) fn new(params: &ModelParams) -> Self {
        let grid = params.grid().clone();
        let grad_potential = if params.has_potential() {
            let gp = gradient(&dealias(&params.potential));
            Some(inverse_pair(&gp.x, &gp.y))
        } else {
            None
        };
        Nonlinear {
            lap_potential: laplacian(&params.potential),
            grad_potential,
            forcing: params.forcing.clone(),
            grid,
        }
    }

    /// Returns `(−u·∇q + ΔΦ, −u·∇u − qRq − q∇Φ + f, max|u|)`, with the
    /// velocity part not yet projected.
    pub(crate) fn evaluate(&self, q: &ScalarField, u: &VectorField) -> (ScalarField, VectorField, f64) {
        let g = &self.grid;
        let len = g.len();
        let qd = dealias(q);
        let ud = dealias_vector(u);
        let rq = riesz_unchecked(&qd);

        let (u1, u2) = inverse_pair(&ud.x, &ud.y);
        let (qp, r1) = inverse_pair(&qd, &rq.x);
        let (r2, _) = inverse_pair(&rq.y, &ScalarField::zeros(g));

        let mut speed: f64 = 0.0;
        let mut a1 = vec![0.0; len];
        let mut a2 = vec![0.0; len];
        let mut b11 = vec![0.0; len];
        let mut b12 = vec![0.0; len];
        let mut b22 = vec![0.0; len];
        let mut c1 = vec![0.0; len];
        let mut c2 = vec![0.0; len];
        for i in 0..len {
            let (x, y, s) = (u1[i], u2[i], qp[i]);
            speed = speed.max((x * x + y * y).sqrt());
            a1[i] = x * s;
            a2[i] = y * s;
            b11[i] = x * x;
            b12[i] = x * y;
            b22[i] = y * y;
            c1[i] = s * r1[i];
            c2[i] = s * r2[i];
        }
        if let Some((p1, p2)) = &self.grad_potential {
            for i in 0..len {
                c1[i] += qp[i] * p1[i];
                c2[i] += qp[i] * p2[i];
            }
        }

        let (fa1, fa2) = forward_pair(g, &a1, &a2);
        let (fb11, fb12) = forward_pair(g, &b11, &b12);
        let (fb22, fc1) = forward_pair(g, &b22, &c1);
        let (fc2, _) = forward_pair(g, &c2, &vec![0.0; len]);

        let i_unit = Complex64::new(0.0, 1.0);
        let (k1, k2, mask) = (g.k1(), g.k2(), g.dealias_mask());
        let mut nq = vec![Complex64::new(0.0, 0.0); len];
        let mut nx = vec![Complex64::new(0.0, 0.0); len];
        let mut ny = vec![Complex64::new(0.0, 0.0); len];
        let (lp, fx, fy) = (self.lap_potential.coeffs(), self.forcing.x.coeffs(), self.forcing.y.coeffs());
        for i in 0..len {
            nq[i] = lp[i];
            nx[i] = fx[i];
            ny[i] = fy[i];
            if !mask[i] {
                continue;
            }
            let ik1 = i_unit * k1[i];
            let ik2 = i_unit * k2[i];
            nq[i] -= ik1 * fa1.coeffs()[i] + ik2 * fa2.coeffs()[i];
            nx[i] -= ik1 * fb11.coeffs()[i] + ik2 * fb12.coeffs()[i] + fc1.coeffs()[i];
            ny[i] -= ik1 * fb12.coeffs()[i] + ik2 * fb22.coeffs()[i] + fc2.coeffs()[i];
        }
        nq[0] = Complex64::new(0.0, 0.0);
        let nq = ScalarField::from_coeffs(g, nq).expect("grid-sized buffer");
        let nu = VectorField {
            x: ScalarField::from_coeffs(g, nx).expect("grid-sized buffer"),
            y: ScalarField::from_coeffs(g, ny).expect("grid-sized buffer"),
        };
        (nq, nu, speed)
    }
}
