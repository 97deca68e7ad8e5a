//! Functionals behind the inequalities used in the well-posedness and
//! ergodicity arguments.

use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::dynamics::{ModelParams, Stepper, SystemState};
use crate::noise::NoiseBasis;
use crate::spectral::{
    advect_scalar, apply_lambda, exact_quadrature_size, gradient, homogeneous_norm_sq, integrate_product,
    lp_norm, FourierGrid, ScalarField, VectorField, TORUS_AREA,
};

/// `∫ q³Λq / ‖q‖⁴_{L⁴}`, evaluated by exact quadrature.
pub fn poincare_l4_ratio(q: &ScalarField) -> Result<f64, DiagnosticsError> {
    if !q.is_mean_zero() {
        return Err(DiagnosticsError::NonZeroMean);
    }
    if q.is_zero() {
        return Err(DiagnosticsError::ZeroField);
    }
    let lq = apply_lambda(q, 1.0)?;
    let num = integrate_product(&[q, q, q, &lq]);
    Ok(num / lp_norm(q, 4).powi(4))
}

/// Terms of the Itô identity for `‖q‖⁴_{L⁴}`:
/// `d‖q‖⁴ = [−4(u·∇q, q³) − 4(Λq, q³) + 6(Σ g̃_l², q²)] dt + martingale`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct L4Terms {
    pub t: f64,
    pub l4_pow4: f64,
    /// `−4(u·∇q, q³)`, zero for divergence-free `u`.
    pub advection: f64,
    /// `−4(Λq, q³)`
    pub dissipation: f64,
    /// `6(Σ g̃_l², q²)`
    pub ito: f64,
    /// `∫q³Λq / ‖q‖⁴_{L⁴}`; zero for `q = 0`.
    pub poincare_ratio: f64,
}

pub fn l4_terms(state: &SystemState, basis: &NoiseBasis) -> L4Terms {
    let q = &state.q;
    if q.is_zero() {
        return L4Terms {
            t: state.t,
            ..Default::default()
        };
    }
    let grad = gradient(q);
    let adv = integrate_product(&[&state.u.x, &grad.x, q, q, q]) + integrate_product(&[&state.u.y, &grad.y, q, q, q]);
    let lq = crate::spectral::lambda_unchecked(q, 1.0);
    let diss = integrate_product(&[&lq, q, q, q]);
    let l4 = lp_norm(q, 4).powi(4);
    let ito = if basis.count(crate::noise::NoiseTarget::Charge) > 0 {
        let m = exact_quadrature_size(q.grid().n(), &[q.max_wavenumber() * 2 + 2 * basis_kmax(basis)]);
        let var = basis.charge_variance_density(m);
        let qs = q.to_physical_padded(m);
        6.0 * var.iter().zip(&qs).map(|(v, x)| v * x * x).sum::<f64>() * TORUS_AREA / (m * m) as f64
    } else {
        0.0
    };
    L4Terms {
        t: state.t,
        l4_pow4: l4,
        advection: -4.0 * adv,
        dissipation: -4.0 * diss,
        ito,
        poincare_ratio: diss / l4,
    }
}

fn basis_kmax(basis: &NoiseBasis) -> i64 {
    basis
        .directions()
        .iter()
        .map(|d| d.k[0].abs().max(d.k[1].abs()))
        .max()
        .unwrap_or(0)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct L4BudgetReport {
    pub terms: Vec<L4Terms>,
    /// `max |(u·∇q, q³)| / (‖u‖‖q‖³)` over the samples.
    pub max_relative_advection: f64,
    /// Smallest Poincaré ratio seen; the empirical `c`.
    pub min_poincare_ratio: f64,
    /// Whether `−4(Λq, q³) ≤ −c‖q‖⁴` held with `c = min_poincare_ratio`.
    pub dissipation_bounded: bool,
    /// Whether `‖q(t)‖⁴ ≤ ‖q₀‖⁴ e^{−c t}` held at every sample.
    pub decay_bound_holds: bool,
}

/// Evaluates the `L⁴` budget terms along a sequence of snapshots.
pub fn l4_budget_check(snapshots: &[SystemState], basis: &NoiseBasis) -> L4BudgetReport {
    let terms: Vec<L4Terms> = snapshots.iter().map(|s| l4_terms(s, basis)).collect();
    let mut max_rel: f64 = 0.0;
    for (s, t) in snapshots.iter().zip(&terms) {
        let scale = s.u.l2_norm_sq().sqrt() * s.q.l2_norm_sq().sqrt().powi(3);
        if scale > 0.0 {
            max_rel = max_rel.max((t.advection / 4.0).abs() / scale);
        }
    }
    let nonzero: Vec<&L4Terms> = terms.iter().filter(|t| t.l4_pow4 > 0.0).collect();
    let c = nonzero.iter().map(|t| t.poincare_ratio).fold(f64::INFINITY, f64::min);
    let c = if c.is_finite() { c } else { 0.0 };
    let dissipation_bounded = nonzero.iter().all(|t| t.dissipation <= -c * t.l4_pow4 * (1.0 - 1e-12));
    let (t0, e0) = terms.first().map(|t| (t.t, t.l4_pow4)).unwrap_or((0.0, 0.0));
    let decay_bound_holds = terms.iter().all(|t| t.l4_pow4 <= e0 * (-c * (t.t - t0)).exp() * (1.0 + 1e-12) + 1e-300);
    L4BudgetReport {
        terms,
        max_relative_advection: max_rel,
        min_poincare_ratio: c,
        dissipation_bounded,
        decay_bound_holds,
    }
}

/// `K(Φ, u, q) = ‖∇Φ‖²_∞ + ‖∇u‖² + ‖∇u‖ + ‖q‖²_{L⁴} + ‖q‖⁴_{L⁴} + ‖Δu‖²`.
pub fn rcond(grad_potential_sup_sq: f64, q: &ScalarField, u: &VectorField) -> f64 {
    let k_sq = q.grid().k_sq();
    let gu = u.weighted_norm_sq(|i| k_sq[i]);
    let lu = u.weighted_norm_sq(|i| k_sq[i] * k_sq[i]);
    let l4 = lp_norm(q, 4);
    grad_potential_sup_sq + gu + gu.sqrt() + l4 * l4 + l4.powi(4) + lu
}

/// `‖∇Φ‖²_∞` sampled on a 2× oversampled grid.
pub fn grad_potential_sup_sq(potential: &ScalarField) -> f64 {
    let s = gradient(potential)
        .magnitude_padded(2 * potential.grid().n())
        .into_iter()
        .fold(0.0f64, f64::max);
    s * s
}

/// Monotonicity functional for a pair of states.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    /// `(F(q₁,u₁) − F(q₂,u₂), (Λ^{-1}δq, δu)) + C₀K(‖Λ^{-1/2}δq‖² + ‖δu‖²)`
    pub lhs: f64,
    /// `¼(‖∇δu‖² + ‖δq‖²)`
    pub gap_lower_bound: f64,
    /// `K(Φ, u₁, q₁)`
    pub k_value: f64,
    pub c0: f64,
    /// `‖δq‖² + ‖∇δu‖²`, the part of the pairing that is quadratic in the states.
    pub dissipative: f64,
    /// `(δq ∇Φ, δu)`
    pub potential: f64,
    /// Pairing of the quadratic nonlinearities, cubic in the states.
    pub nonlinear: f64,
    /// `‖Λ^{-1/2}δq‖² + ‖δu‖²`
    pub distance_sq: f64,
    pub holds: bool,
}

impl CoercivityReport {
    /// Smallest `C₀` for which this pair satisfies the lower bound.
    pub fn required_c0(&self) -> f64 {
        let pairing = self.dissipative + self.potential + self.nonlinear;
        if self.k_value * self.distance_sq == 0.0 {
            return 0.0;
        }
        ((self.gap_lower_bound - pairing) / (self.k_value * self.distance_sq)).max(0.0)
    }
}

pub fn coercivity_check(s1: &SystemState, s2: &SystemState, params: &ModelParams, c0: f64) -> CoercivityReport {
    let dq = &s1.q - &s2.q;
    let du = &s1.u - &s2.u;
    let k_sq = dq.grid().k_sq().to_vec();
    let inv_dq = dq.map_multiplier(|i| if i == 0 { 0.0 } else { 1.0 / k_sq[i].sqrt() });
    // F = −(nonlinear part) + linear part; the ∇Φ terms are split out
    let no_potential = ModelParams {
        potential: ScalarField::zeros(params.grid()),
        ..params.clone()
    };
    let bare = Stepper::new(&no_potential);
    let (nq1, nu1) = bare.nonlinear_drift(&s1.q, &s1.u);
    let (nq2, nu2) = bare.nonlinear_drift(&s2.q, &s2.u);
    let nonlinear = -((&nq1 - &nq2).dot(&inv_dq) + (&nu1 - &nu2).dot(&du));
    let dissipative = dq.l2_norm_sq() + du.weighted_norm_sq(|i| k_sq[i]);
    let potential = if params.has_potential() {
        let g = gradient(&params.potential);
        integrate_product(&[&dq, &g.x, &du.x]) + integrate_product(&[&dq, &g.y, &du.y])
    } else {
        0.0
    };
    let k_value = rcond(grad_potential_sup_sq(&params.potential), &s1.q, &s1.u);
    let distance_sq = homogeneous_norm_sq(&dq, -0.5) + du.l2_norm_sq();
    let lhs = dissipative + potential + nonlinear + c0 * k_value * distance_sq;
    let gap_lower_bound = 0.25 * (du.weighted_norm_sq(|i| k_sq[i]) + dq.l2_norm_sq());
    CoercivityReport {
        lhs,
        gap_lower_bound,
        k_value,
        c0,
        dissipative,
        potential,
        nonlinear,
        distance_sq,
        holds: lhs >= gap_lower_bound,
    }
}

/// `‖Λ^{-1/2}(v·∇ρ) − v·∇Λ^{-1/2}ρ‖ / (‖Δv‖‖ρ‖)`, evaluated without
/// truncation on a grid twice as fine.
pub fn commutator_ratio(v: &VectorField, rho: &ScalarField) -> Result<f64, DiagnosticsError> {
    if !rho.is_mean_zero() {
        return Err(DiagnosticsError::NonZeroMean);
    }
    let fine = FourierGrid::new(2 * rho.grid().n())?;
    let vf = v.resample(&fine)?;
    let rf = rho.resample(&fine)?;
    let a = crate::spectral::lambda_unchecked(&advect_scalar(&vf, &rf)?, -0.5);
    let b = advect_scalar(&vf, &crate::spectral::lambda_unchecked(&rf, -0.5))?;
    let num = (&a - &b).l2_norm_sq().sqrt();
    let k_sq = v.grid().k_sq();
    let den = v.weighted_norm_sq(|i| k_sq[i] * k_sq[i]).sqrt() * rho.l2_norm_sq().sqrt();
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// One row of a continuity check.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub t: f64,
    /// `‖δu‖² + ‖Λ^{-1/2}δq‖²`
    pub distance_sq: f64,
    /// `e^{2C₀∫K} · distance_sq(0)`
    pub bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub c0: f64,
    pub rows: Vec<ContinuityRow>,
    /// `max distance/bound`; at most 1 when the bound holds.
    pub max_ratio: f64,
    pub holds: bool,
}

/// Grönwall bound for two solutions on the same noise path.
///
/// The exponent is `r(t) = 2C₀∫₀ᵗ K(Φ, u₁, q₁) ds` accumulated from the
/// first trajectory; `times[i]`, `int_rcond[i]` and the snapshots must be
/// sampled at the same instants.
pub fn continuity_bound_check(
    snaps1: &[SystemState],
    snaps2: &[SystemState],
    int_rcond: &[f64],
    c0: f64,
) -> Result<ContinuityReport, DiagnosticsError> {
    if snaps1.len() != snaps2.len() || snaps1.len() != int_rcond.len() || snaps1.is_empty() {
        return Err(DiagnosticsError::Mismatch("snapshot counts differ".into()));
    }
    let mut rows = Vec::with_capacity(snaps1.len());
    let d0 = snaps1[0].difference(&snaps2[0]).energy();
    let mut max_ratio: f64 = 0.0;
    for ((a, b), r) in snaps1.iter().zip(snaps2).zip(int_rcond) {
        if (a.t - b.t).abs() > 1e-9 {
            return Err(DiagnosticsError::Mismatch(format!("snapshot times {} and {}", a.t, b.t)));
        }
        let d = a.difference(b).energy();
        let bound = (2.0 * c0 * r).exp() * d0;
        if bound > 0.0 {
            max_ratio = max_ratio.max(d / bound);
        } else if d > 0.0 {
            max_ratio = f64::INFINITY;
        }
        rows.push(ContinuityRow { t: a.t, distance_sq: d, bound });
    }
    Ok(ContinuityReport {
        c0,
        holds: max_ratio <= 1.0,
        rows,
        max_ratio,
    })
}
