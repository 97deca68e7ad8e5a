//! Dealiased pseudo-spectral products.
//!
//! Operands are truncated to the 2/3 mask, multiplied pointwise on the
//! `n × n` grid and transformed back, then truncated again. With inputs
//! inside the mask every aliased contribution lands outside it, so the
//! result equals the Galerkin truncation of the exact product.

use rustfft::num_complex::Complex64;

use super::field::{ScalarField, VectorField};
use super::ops::{dealias, dealias_in_place, gradient, riesz};
use super::{FourierGrid, SpectralError};

/// Inverse transform of two real fields with one complex FFT.
pub fn inverse_pair(a: &ScalarField, b: &ScalarField) -> (Vec<f64>, Vec<f64>) {
    let g = a.grid();
    let mut data: Vec<Complex64> = a
        .coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| x + Complex64::new(0.0, 1.0) * y)
        .collect();
    g.fft2(&mut data, false);
    data.into_iter().map(|c| (c.re, c.im)).unzip()
}

/// Forward transform of two real sample arrays with one complex FFT. The
/// split into the two spectra is Hermitian by construction.
pub fn forward_pair(grid: &std::sync::Arc<FourierGrid>, a: &[f64], b: &[f64]) -> (ScalarField, ScalarField) {
    let mut data: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
    grid.fft2(&mut data, true);
    let scale = 1.0 / grid.len() as f64;
    let mut ca = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut cb = vec![Complex64::new(0.0, 0.0); grid.len()];
    for i in 0..grid.len() {
        let z = data[i];
        let zn = data[grid.neg_index(i)].conj();
        ca[i] = (z + zn) * (0.5 * scale);
        cb[i] = (z - zn) * Complex64::new(0.0, -0.5 * scale);
    }
    (
        ScalarField::from_coeffs(grid, ca).expect("grid-sized buffer"),
        ScalarField::from_coeffs(grid, cb).expect("grid-sized buffer"),
    )
}

fn check(a: &ScalarField, b: &ScalarField) -> Result<(), SpectralError> {
    if a.grid().n() != b.grid().n() {
        Err(SpectralError::GridMismatch(a.grid().n(), b.grid().n()))
    } else {
        Ok(())
    }
}

/// Dealiased product `a·b`. The mean of the product is retained.
pub fn product(a: &ScalarField, b: &ScalarField) -> Result<ScalarField, SpectralError> {
    check(a, b)?;
    let (pa, pb) = inverse_pair(&dealias(a), &dealias(b));
    let prod: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
    let mut out = ScalarField::from_physical(a.grid(), &prod)?;
    dealias_in_place(&mut out);
    Ok(out)
}

/// Scalar times vector, `s·v`.
pub fn scale_vector(s: &ScalarField, v: &VectorField) -> Result<VectorField, SpectralError> {
    check(s, &v.x)?;
    let ps = dealias(s).to_physical();
    let (px, py) = inverse_pair(&dealias(&v.x), &dealias(&v.y));
    let ax: Vec<f64> = ps.iter().zip(&px).map(|(a, b)| a * b).collect();
    let ay: Vec<f64> = ps.iter().zip(&py).map(|(a, b)| a * b).collect();
    let (mut x, mut y) = forward_pair(s.grid(), &ax, &ay);
    dealias_in_place(&mut x);
    dealias_in_place(&mut y);
    Ok(VectorField { x, y })
}

/// Dot product of two vector fields, `a·b`.
pub fn dot_product(a: &VectorField, b: &VectorField) -> Result<ScalarField, SpectralError> {
    check(&a.x, &b.x)?;
    let (ax, ay) = inverse_pair(&dealias(&a.x), &dealias(&a.y));
    let (bx, by) = inverse_pair(&dealias(&b.x), &dealias(&b.y));
    let p: Vec<f64> = (0..ax.len()).map(|i| ax[i] * bx[i] + ay[i] * by[i]).collect();
    let mut out = ScalarField::from_physical(a.grid(), &p)?;
    dealias_in_place(&mut out);
    Ok(out)
}

/// Scalar advection `u·∇q`.
pub fn advect_scalar(u: &VectorField, q: &ScalarField) -> Result<ScalarField, SpectralError> {
    dot_product(u, &gradient(q))
}

/// Vector advection `(u·∇)v`.
pub fn advect_vector(u: &VectorField, v: &VectorField) -> Result<VectorField, SpectralError> {
    let x = advect_scalar(u, &v.x)?;
    let y = advect_scalar(u, &v.y)?;
    Ok(VectorField { x, y })
}

/// Electric self-force `q Rq`.
pub fn charge_force(q: &ScalarField) -> Result<VectorField, SpectralError> {
    scale_vector(q, &riesz(q)?)
}
