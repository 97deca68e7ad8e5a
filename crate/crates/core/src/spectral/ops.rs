//! Fourier multiplier operators.

use rustfft::num_complex::Complex64;

use super::field::{ScalarField, VectorField};
use super::SpectralError;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Fractional Laplacian `Λ^s`, symbol `|k|^s`. The zero mode maps to zero.
///
/// Negative powers are undefined on the mean, so a field with a nonzero
/// `(0,0)` coefficient is rejected when `s < 0`.
pub fn apply_lambda(f: &ScalarField, s: f64) -> Result<ScalarField, SpectralError> {
    if s < 0.0 && !f.is_mean_zero() {
        return Err(SpectralError::NonZeroMean("apply_lambda with negative power"));
    }
    Ok(lambda_unchecked(f, s))
}

/// `Λ^s` that silently drops the mean.
pub(crate) fn lambda_unchecked(f: &ScalarField, s: f64) -> ScalarField {
    if s == 0.0 {
        return f.clone();
    }
    let k_abs = f.grid().k_abs().to_vec();
    f.map_multiplier(|i| if i == 0 { 0.0 } else { k_abs[i].powf(s) })
}

/// Riesz transform `R = ∇Λ^{-1}`, components `i k_j / |k| f_k`.
pub fn riesz(f: &ScalarField) -> Result<VectorField, SpectralError> {
    if !f.is_mean_zero() {
        return Err(SpectralError::NonZeroMean("riesz"));
    }
    Ok(riesz_unchecked(f))
}

pub(crate) fn riesz_unchecked(f: &ScalarField) -> VectorField {
    let g = f.grid();
    let (k1, k2, k_abs) = (g.k1(), g.k2(), g.k_abs());
    let mut x = ScalarField::zeros(g);
    let mut y = ScalarField::zeros(g);
    {
        let (cx, cy) = (x.coeffs_mut(), y.coeffs_mut());
        for (i, c) in f.coeffs().iter().enumerate().skip(1) {
            let ic = I * c / k_abs[i];
            cx[i] = ic * k1[i];
            cy[i] = ic * k2[i];
        }
    }
    zero_nyquist_odd(&mut x);
    zero_nyquist_odd(&mut y);
    VectorField { x, y }
}

/// Spectral gradient, multipliers `i k_j`.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid();
    let (k1, k2) = (g.k1(), g.k2());
    let mut x = ScalarField::zeros(g);
    let mut y = ScalarField::zeros(g);
    {
        let (cx, cy) = (x.coeffs_mut(), y.coeffs_mut());
        for (i, c) in f.coeffs().iter().enumerate() {
            cx[i] = I * c * k1[i];
            cy[i] = I * c * k2[i];
        }
    }
    zero_nyquist_odd(&mut x);
    zero_nyquist_odd(&mut y);
    VectorField { x, y }
}

/// Spectral divergence `i k·v̂`.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid();
    let (k1, k2) = (g.k1(), g.k2());
    let mut out = ScalarField::zeros(g);
    {
        let c = out.coeffs_mut();
        let (a, b) = (v.x.coeffs(), v.y.coeffs());
        for i in 0..c.len() {
            c[i] = I * (a[i] * k1[i] + b[i] * k2[i]);
        }
    }
    zero_nyquist_odd(&mut out);
    out
}

/// `Δf`, symbol `-|k|²`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let k_sq = f.grid().k_sq().to_vec();
    f.map_multiplier(|i| -k_sq[i])
}

pub fn vector_laplacian(v: &VectorField) -> VectorField {
    VectorField {
        x: laplacian(&v.x),
        y: laplacian(&v.y),
    }
}

/// Leray–Hodge projection `v̂ − (k·v̂)k/|k|²`; the zero mode passes through.
pub fn leray_project(v: &VectorField) -> VectorField {
    let mut out = v.clone();
    leray_project_in_place(&mut out);
    out
}

pub fn leray_project_in_place(v: &mut VectorField) {
    let g = v.grid().clone();
    let (k1, k2, k_sq) = (g.k1(), g.k2(), g.k_sq());
    let (cx, cy) = (v.x.coeffs_mut(), v.y.coeffs_mut());
    for i in 1..k_sq.len() {
        let dot = cx[i] * k1[i] + cy[i] * k2[i];
        let s = dot / k_sq[i];
        cx[i] -= s * k1[i];
        cy[i] -= s * k2[i];
    }
}

/// Zeroes coefficients outside the 2/3-rule mask.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let mut out = f.clone();
    dealias_in_place(&mut out);
    out
}

pub fn dealias_in_place(f: &mut ScalarField) {
    let mask = f.grid().dealias_mask().to_vec();
    for (c, keep) in f.coeffs_mut().iter_mut().zip(mask) {
        if !keep {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

pub fn dealias_vector(v: &VectorField) -> VectorField {
    VectorField {
        x: dealias(&v.x),
        y: dealias(&v.y),
    }
}

/// Odd multipliers (`i k_j`) break Hermitian symmetry on the Nyquist row,
/// where `+n/2` and `-n/2` share a slot; those coefficients are dropped.
fn zero_nyquist_odd(f: &mut ScalarField) {
    let g = f.grid().clone();
    for (i, c) in f.coeffs_mut().iter_mut().enumerate() {
        if g.is_nyquist(i) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}
