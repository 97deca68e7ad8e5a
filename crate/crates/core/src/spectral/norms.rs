//! Norms of scalar fields.
//!
//! Two Sobolev conventions are exposed. The homogeneous norm
//! `‖Λ^s f‖_{L²}` is used throughout the diagnostics; the inhomogeneous
//! coefficient sum `Σ (1 + |k|^s)² |f_k|²` is reported alongside it.

use serde::{Deserialize, Serialize};

use super::field::{exact_quadrature_size, ScalarField, VectorField};
use super::grid::TORUS_AREA;

/// Which Sobolev indices to evaluate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormRequest {
    pub sobolev: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l2: f64,
    pub l4: f64,
    /// `(s, ‖Λ^s f‖_{L²})`; the zero mode is excluded for `s ≠ 0`.
    pub homogeneous: Vec<(f64, f64)>,
    /// `(s, (Σ (1 + |k|^s)² |f_k|²)^{1/2})`.
    pub inhomogeneous: Vec<(f64, f64)>,
    /// `‖Λ^{-1/2} f‖_{L²}` (mean excluded).
    pub h_minus_half: f64,
}

pub fn norms(f: &ScalarField, request: &NormRequest) -> NormReport {
    let homogeneous = request
        .sobolev
        .iter()
        .map(|&s| (s, homogeneous_norm_sq(f, s).sqrt()))
        .collect();
    let inhomogeneous = request
        .sobolev
        .iter()
        .map(|&s| (s, inhomogeneous_norm_sq(f, s).sqrt()))
        .collect();
    NormReport {
        l2: f.l2_norm_sq().sqrt(),
        l4: lp_norm(f, 4),
        homogeneous,
        inhomogeneous,
        h_minus_half: homogeneous_norm_sq(f, -0.5).sqrt(),
    }
}

/// `‖Λ^s f‖²_{L²} = (2π)² Σ_{k≠0} |k|^{2s} |f_k|²`; for `s = 0` the mean is kept.
pub fn homogeneous_norm_sq(f: &ScalarField, s: f64) -> f64 {
    if s == 0.0 {
        return f.l2_norm_sq();
    }
    let k_sq = f.grid().k_sq();
    f.weighted_norm_sq(|i| if i == 0 { 0.0 } else { k_sq[i].powf(s) })
}

pub fn homogeneous_vector_norm_sq(v: &VectorField, s: f64) -> f64 {
    homogeneous_norm_sq(&v.x, s) + homogeneous_norm_sq(&v.y, s)
}

/// `Σ_k (1 + |k|^s)² |f_k|²`, the coefficient form without the area factor.
pub fn inhomogeneous_norm_sq(f: &ScalarField, s: f64) -> f64 {
    let k_abs = f.grid().k_abs();
    f.weighted_norm_sq(|i| {
        let w = 1.0 + if i == 0 && s != 0.0 { 0.0 } else { k_abs[i].powf(s) };
        w * w
    }) / TORUS_AREA
}

/// `‖f‖_{L^p}` by uniform quadrature, exact for even integer `p` on
/// trigonometric polynomials.
pub fn lp_norm(f: &ScalarField, p: u32) -> f64 {
    if f.is_zero() {
        return 0.0;
    }
    let m = exact_quadrature_size(f.grid().n(), &vec![f.max_wavenumber(); p as usize]);
    let samples = f.to_physical_padded(m);
    let sum: f64 = samples.iter().map(|v| v.abs().powi(p as i32)).sum();
    (sum * TORUS_AREA / (m * m) as f64).powf(1.0 / p as f64)
}

/// `‖f‖⁴_{L⁴}`.
pub fn l4_norm_pow4(f: &ScalarField) -> f64 {
    lp_norm(f, 4).powi(4)
}

/// `‖f‖_{L^∞}` sampled on a 2× oversampled grid.
pub fn sup_norm(f: &ScalarField) -> f64 {
    f.to_physical_padded(2 * f.grid().n())
        .into_iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// `‖v‖_{L^p}` of the pointwise magnitude.
pub fn vector_lp_norm(v: &VectorField, p: u32) -> f64 {
    if v.is_zero() {
        return 0.0;
    }
    let m = exact_quadrature_size(v.grid().n(), &vec![v.max_wavenumber(); p as usize]);
    let samples = v.magnitude_padded(m);
    let sum: f64 = samples.iter().map(|x| x.powi(p as i32)).sum();
    (sum * TORUS_AREA / (m * m) as f64).powf(1.0 / p as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FourierGrid;
    use std::f64::consts::PI;

    #[test]
    fn cos_l2_is_two_pi_squared() {
        let g = FourierGrid::new(16).unwrap();
        let f = ScalarField::cos_mode(&g, 1, 0, 1.0).unwrap();
        let r = norms(&f, &NormRequest { sobolev: vec![0.0, 1.0] });
        assert!((r.l2 * r.l2 - 2.0 * PI * PI).abs() < 1e-12);
        assert!((r.inhomogeneous[1].1.powi(2) - 2.0).abs() < 1e-14);
        assert_eq!(r.homogeneous[0].1, r.l2);
        // ∫cos⁴ = 3/8 · 4π²
        assert!((r.l4.powi(4) - 1.5 * PI * PI).abs() < 1e-11);
    }

    #[test]
    fn zero_field_norms() {
        let g = FourierGrid::new(8).unwrap();
        let r = norms(&ScalarField::zeros(&g), &NormRequest { sobolev: vec![-0.5, 1.0, 2.5] });
        assert_eq!(r.l2, 0.0);
        assert_eq!(r.l4, 0.0);
        assert!(r.homogeneous.iter().all(|(_, v)| *v == 0.0));
        assert!(r.inhomogeneous.iter().all(|(_, v)| *v == 0.0));
        assert_eq!(r.h_minus_half, 0.0);
    }

    #[test]
    fn sup_of_cosine() {
        let g = FourierGrid::new(8).unwrap();
        let f = ScalarField::cos_mode(&g, 1, 1, 3.0).unwrap();
        assert!((sup_norm(&f) - 3.0).abs() < 1e-12);
    }
}
