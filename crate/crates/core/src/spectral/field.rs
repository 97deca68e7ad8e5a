//! Real scalar and vector fields stored as Hermitian Fourier coefficients.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use super::grid::{smooth_size, FourierGrid, TORUS_AREA};
use super::SpectralError;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Real scalar field on T² as Fourier coefficients,
/// `f_k = (2π)^{-2} ∫ f e^{-ik·x} dx`.
#[derive(Clone)]
pub struct ScalarField {
    grid: Arc<FourierGrid>,
    coeffs: Vec<Complex64>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("n", &self.grid.n())
            .field("max_abs_coeff", &self.max_abs_coeff())
            .finish()
    }
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.n() == other.grid.n() && self.coeffs == other.coeffs
    }
}

impl ScalarField {
    pub fn zeros(grid: &Arc<FourierGrid>) -> Self {
        ScalarField {
            grid: grid.clone(),
            coeffs: vec![ZERO; grid.len()],
        }
    }

    /// Wraps raw coefficients in the grid's storage order.
    pub fn from_coeffs(grid: &Arc<FourierGrid>, coeffs: Vec<Complex64>) -> Result<Self, SpectralError> {
        if coeffs.len() != grid.len() {
            return Err(SpectralError::LengthMismatch {
                expected: grid.len(),
                found: coeffs.len(),
            });
        }
        Ok(ScalarField {
            grid: grid.clone(),
            coeffs,
        })
    }

    /// Transforms physical samples (layout `i1 * n + i2`) to coefficients and
    /// enforces Hermitian symmetry.
    pub fn from_physical(grid: &Arc<FourierGrid>, values: &[f64]) -> Result<Self, SpectralError> {
        if values.len() != grid.len() {
            return Err(SpectralError::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        grid.fft2(&mut data, true);
        let scale = 1.0 / grid.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        let mut field = ScalarField {
            grid: grid.clone(),
            coeffs: data,
        };
        let residual = field.enforce_hermitian();
        let bound = 1e-13 * field.max_abs_coeff().max(1.0);
        if residual > bound {
            return Err(SpectralError::HermitianResidual(residual));
        }
        Ok(field)
    }

    /// Samples the field on the grid's own physical points.
    pub fn to_physical(&self) -> Vec<f64> {
        let mut data = self.coeffs.clone();
        self.grid.fft2(&mut data, false);
        data.into_iter().map(|c| c.re).collect()
    }

    /// Samples the field on an `m × m` uniform grid with `m ≥ n` by zero padding.
    /// Nyquist coefficients are split evenly between `±n/2`.
    pub fn to_physical_padded(&self, m: usize) -> Vec<f64> {
        let n = self.grid.n();
        if m == n {
            return self.to_physical();
        }
        assert!(m > n, "padded grid must be finer than the field grid");
        let half = (n / 2) as i64;
        let mut data = vec![ZERO; m * m];
        let slot = |k: i64| k.rem_euclid(m as i64) as usize;
        for (idx, &c) in self.coeffs.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            let (a, b) = self.grid.wavenumber(idx);
            let a_opts: &[i64] = if a == half { &[half, -half] } else { &[a] };
            let b_opts: &[i64] = if b == half { &[half, -half] } else { &[b] };
            let share = 1.0 / (a_opts.len() * b_opts.len()) as f64;
            for &aa in a_opts {
                for &bb in b_opts {
                    data[slot(aa) * m + slot(bb)] += c * share;
                }
            }
        }
        let plans = self.grid.padded_plans(m);
        super::grid::fft2_with(plans.1.as_ref(), m, &mut data);
        data.into_iter().map(|c| c.re).collect()
    }

    /// The same trigonometric polynomial on a grid at least as fine.
    pub fn resample(&self, grid: &Arc<FourierGrid>) -> Result<ScalarField, SpectralError> {
        let (n, m) = (self.grid.n(), grid.n());
        if m < n {
            return Err(SpectralError::GridMismatch(n, m));
        }
        if m == n {
            return Ok(self.clone());
        }
        let half = (n / 2) as i64;
        let mut out = ScalarField::zeros(grid);
        for (idx, &c) in self.coeffs.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            let (a, b) = self.grid.wavenumber(idx);
            let a_opts: &[i64] = if a == half { &[half, -half] } else { &[a] };
            let b_opts: &[i64] = if b == half { &[half, -half] } else { &[b] };
            let share = 1.0 / (a_opts.len() * b_opts.len()) as f64;
            for &aa in a_opts {
                for &bb in b_opts {
                    let j = grid.index_of(aa, bb).ok_or(SpectralError::ModeOutOfRange(aa, bb))?;
                    out.coeffs[j] += c * share;
                }
            }
        }
        Ok(out)
    }

    pub fn grid(&self) -> &Arc<FourierGrid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient at wavenumber `(k1, k2)`, zero outside the lattice.
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        self.grid
            .index_of(k1, k2)
            .map(|i| self.coeffs[i])
            .unwrap_or(ZERO)
    }

    /// Sets `f_k = c` and `f_{-k} = conj(c)`.
    pub fn set_mode(&mut self, k1: i64, k2: i64, c: Complex64) -> Result<(), SpectralError> {
        let idx = self
            .grid
            .index_of(k1, k2)
            .ok_or(SpectralError::ModeOutOfRange(k1, k2))?;
        let neg = self.grid.neg_index(idx);
        if neg == idx {
            self.coeffs[idx] = Complex64::new(c.re, 0.0);
        } else {
            self.coeffs[idx] = c;
            self.coeffs[neg] = c.conj();
        }
        Ok(())
    }

    /// `amplitude · cos(k·x)`.
    pub fn cos_mode(grid: &Arc<FourierGrid>, k1: i64, k2: i64, amplitude: f64) -> Result<Self, SpectralError> {
        let mut f = ScalarField::zeros(grid);
        if (k1, k2) == (0, 0) {
            f.set_mode(0, 0, Complex64::new(amplitude, 0.0))?;
        } else {
            f.set_mode(k1, k2, Complex64::new(0.5 * amplitude, 0.0))?;
        }
        Ok(f)
    }

    /// `amplitude · sin(k·x)`.
    pub fn sin_mode(grid: &Arc<FourierGrid>, k1: i64, k2: i64, amplitude: f64) -> Result<Self, SpectralError> {
        let mut f = ScalarField::zeros(grid);
        if (k1, k2) != (0, 0) {
            f.set_mode(k1, k2, Complex64::new(0.0, -0.5 * amplitude))?;
        }
        Ok(f)
    }

    /// Spatial mean, i.e. the `(0,0)` coefficient.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn is_mean_zero(&self) -> bool {
        self.coeffs[0] == ZERO
    }

    pub fn remove_mean(&mut self) {
        self.coeffs[0] = ZERO;
    }

    /// Largest `|f_k - conj(f_{-k})| / 2` over all modes.
    pub fn hermitian_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in 0..self.coeffs.len() {
            let neg = self.grid.neg_index(idx);
            let d = (self.coeffs[idx] - self.coeffs[neg].conj()).norm() * 0.5;
            worst = worst.max(d);
        }
        worst
    }

    /// Projects onto Hermitian-symmetric coefficients and returns the residual
    /// that was removed.
    pub fn enforce_hermitian(&mut self) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in 0..self.coeffs.len() {
            let neg = self.grid.neg_index(idx);
            if neg < idx {
                continue;
            }
            let a = self.coeffs[idx];
            let b = self.coeffs[neg];
            worst = worst.max((a - b.conj()).norm() * 0.5);
            let sym = (a + b.conj()) * 0.5;
            self.coeffs[idx] = sym;
            self.coeffs[neg] = sym.conj();
        }
        worst
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// Largest `max(|k1|, |k2|)` among nonzero coefficients.
    pub fn max_wavenumber(&self) -> i64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != ZERO)
            .map(|(i, _)| {
                let (a, b) = self.grid.wavenumber(i);
                a.abs().max(b.abs())
            })
            .max()
            .unwrap_or(0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == ZERO)
    }

    /// `L²` inner product `∫ f g dx`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid.n(), other.grid.n());
        TORUS_AREA
            * self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.re * b.re + a.im * b.im)
                .sum::<f64>()
    }

    /// `∫ (W f) g dx` for a real even per-index multiplier `W`.
    pub fn weighted_dot(&self, other: &ScalarField, weight: impl Fn(usize) -> f64) -> f64 {
        debug_assert_eq!(self.grid.n(), other.grid.n());
        TORUS_AREA
            * self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .enumerate()
                .map(|(i, (a, b))| weight(i) * (a.re * b.re + a.im * b.im))
                .sum::<f64>()
    }

    /// `‖f‖²_{L²}` by Parseval.
    pub fn l2_norm_sq(&self) -> f64 {
        TORUS_AREA * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `Σ_k w(k) |f_k|²` scaled by the torus area, for a per-index weight.
    pub fn weighted_norm_sq(&self, weight: impl Fn(usize) -> f64) -> f64 {
        TORUS_AREA
            * self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| weight(i) * c.norm_sqr())
                .sum::<f64>()
    }

    pub fn scale(&mut self, s: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= s);
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid.n(), other.grid.n());
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * s;
        }
    }

    /// Applies a real per-index multiplier.
    pub fn map_multiplier(&self, symbol: impl Fn(usize) -> f64) -> ScalarField {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * symbol(i))
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<(), SpectralError> {
        if self.grid.n() == other.grid.n() {
            Ok(())
        } else {
            Err(SpectralError::GridMismatch(self.grid.n(), other.grid.n()))
        }
    }
}

macro_rules! field_arith {
    ($t:ty) => {
        impl Add for &$t {
            type Output = $t;
            fn add(self, rhs: &$t) -> $t {
                let mut out = self.clone();
                out += rhs;
                out
            }
        }
        impl Sub for &$t {
            type Output = $t;
            fn sub(self, rhs: &$t) -> $t {
                let mut out = self.clone();
                out -= rhs;
                out
            }
        }
        impl Mul<f64> for &$t {
            type Output = $t;
            fn mul(self, rhs: f64) -> $t {
                let mut out = self.clone();
                out.scale(rhs);
                out
            }
        }
        impl Neg for &$t {
            type Output = $t;
            fn neg(self) -> $t {
                self * -1.0
            }
        }
        impl SubAssign<&$t> for $t {
            fn sub_assign(&mut self, rhs: &$t) {
                self.axpy(-1.0, rhs);
            }
        }
        impl AddAssign<&$t> for $t {
            fn add_assign(&mut self, rhs: &$t) {
                self.axpy(1.0, rhs);
            }
        }
    };
}

field_arith!(ScalarField);
field_arith!(VectorField);

/// Two-component real field on T².
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn zeros(grid: &Arc<FourierGrid>) -> Self {
        VectorField {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
        }
    }

    pub fn new(x: ScalarField, y: ScalarField) -> Result<Self, SpectralError> {
        x.same_grid(&y)?;
        Ok(VectorField { x, y })
    }

    pub fn grid(&self) -> &Arc<FourierGrid> {
        self.x.grid()
    }

    pub fn components(&self) -> [&ScalarField; 2] {
        [&self.x, &self.y]
    }

    /// Largest `|k·v̂_k|` over all modes.
    pub fn divergence_residual(&self) -> f64 {
        let g = self.grid();
        let (k1, k2) = (g.k1(), g.k2());
        let (a, b) = (self.x.coeffs(), self.y.coeffs());
        (0..g.len())
            .map(|i| (a[i] * k1[i] + b[i] * k2[i]).norm())
            .fold(0.0, f64::max)
    }

    pub fn mean(&self) -> [f64; 2] {
        [self.x.mean(), self.y.mean()]
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y)
    }

    pub fn weighted_dot(&self, other: &VectorField, weight: impl Fn(usize) -> f64 + Copy) -> f64 {
        self.x.weighted_dot(&other.x, weight) + self.y.weighted_dot(&other.y, weight)
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.x.l2_norm_sq() + self.y.l2_norm_sq()
    }

    pub fn weighted_norm_sq(&self, weight: impl Fn(usize) -> f64 + Copy) -> f64 {
        self.x.weighted_norm_sq(weight) + self.y.weighted_norm_sq(weight)
    }

    pub fn scale(&mut self, s: f64) {
        self.x.scale(s);
        self.y.scale(s);
    }

    pub fn axpy(&mut self, s: f64, other: &VectorField) {
        self.x.axpy(s, &other.x);
        self.y.axpy(s, &other.y);
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.x.is_zero() && self.y.is_zero()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.x.max_abs_coeff().max(self.y.max_abs_coeff())
    }

    pub fn max_wavenumber(&self) -> i64 {
        self.x.max_wavenumber().max(self.y.max_wavenumber())
    }

    pub fn map_multiplier(&self, symbol: impl Fn(usize) -> f64 + Copy) -> VectorField {
        VectorField {
            x: self.x.map_multiplier(symbol),
            y: self.y.map_multiplier(symbol),
        }
    }

    pub fn resample(&self, grid: &Arc<FourierGrid>) -> Result<VectorField, SpectralError> {
        Ok(VectorField {
            x: self.x.resample(grid)?,
            y: self.y.resample(grid)?,
        })
    }

    /// Pointwise magnitude samples `|v(x)|` on an `m × m` grid.
    pub fn magnitude_padded(&self, m: usize) -> Vec<f64> {
        let a = self.x.to_physical_padded(m);
        let b = self.y.to_physical_padded(m);
        a.iter().zip(&b).map(|(x, y)| x.hypot(*y)).collect()
    }
}

/// Evaluation grid size on which the product of fields with the given
/// maximal wavenumbers integrates exactly by uniform quadrature.
pub fn exact_quadrature_size(base: usize, max_wavenumbers: &[i64]) -> usize {
    let total: i64 = max_wavenumbers.iter().sum();
    smooth_size(base.max(total as usize + 1))
}

/// `∫_{T²} Π f_i dx`, exact for the trigonometric polynomials involved.
pub fn integrate_product(fields: &[&ScalarField]) -> f64 {
    if fields.is_empty() {
        return TORUS_AREA;
    }
    let n = fields[0].grid().n();
    let kmax: Vec<i64> = fields.iter().map(|f| f.max_wavenumber()).collect();
    let m = exact_quadrature_size(n, &kmax);
    let samples: Vec<Vec<f64>> = fields.iter().map(|f| f.to_physical_padded(m)).collect();
    let mut acc = 0.0;
    for j in 0..m * m {
        acc += samples.iter().map(|s| s[j]).product::<f64>();
    }
    acc * TORUS_AREA / (m * m) as f64
}
