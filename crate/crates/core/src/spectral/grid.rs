//! Square Fourier grid on the 2π-periodic torus and its FFT plans.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::SpectralError;

/// Area of the torus `[0, 2π)²`.
pub const TORUS_AREA: f64 = 4.0 * PI * PI;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Square grid with `n` points per dimension and the matching integer
/// wavenumber lattice.
///
/// Coefficients and physical samples share the flattened layout
/// `idx = i1 * n + i2`, where `i1` runs along `x₁` and `i2` along `x₂`.
/// In spectral space index `i` stores wavenumber `i` for `i ≤ n/2` and
/// `i - n` otherwise, so the Nyquist wavenumber is `+n/2`.
pub struct FourierGrid {
    n: usize,
    cutoff: i64,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k_sq: Vec<f64>,
    k_abs: Vec<f64>,
    mask: Vec<bool>,
    neg: Vec<usize>,
    plans: Plans,
    planner: Mutex<FftPlanner<f64>>,
    padded: Mutex<HashMap<usize, Arc<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>>>,
}

impl fmt::Debug for FourierGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierGrid")
            .field("n", &self.n)
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

impl PartialEq for FourierGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl FourierGrid {
    /// Builds a grid with `n` modes per dimension. `n` must be even and ≥ 8.
    pub fn new(n: usize) -> Result<Arc<Self>, SpectralError> {
        if n < 8 || n % 2 != 0 {
            return Err(SpectralError::InvalidGrid(n));
        }
        let len = n * n;
        let cutoff = (n / 3) as i64;
        let mut k1 = vec![0.0; len];
        let mut k2 = vec![0.0; len];
        let mut k_sq = vec![0.0; len];
        let mut k_abs = vec![0.0; len];
        let mut mask = vec![false; len];
        let mut neg = vec![0; len];
        for i1 in 0..n {
            for i2 in 0..n {
                let idx = i1 * n + i2;
                let a = wavenumber_of(i1, n);
                let b = wavenumber_of(i2, n);
                k1[idx] = a as f64;
                k2[idx] = b as f64;
                k_sq[idx] = (a * a + b * b) as f64;
                k_abs[idx] = k_sq[idx].sqrt();
                mask[idx] = a.abs() <= cutoff && b.abs() <= cutoff;
                neg[idx] = ((n - i1) % n) * n + (n - i2) % n;
            }
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Arc::new(FourierGrid {
            n,
            cutoff,
            k1,
            k2,
            k_sq,
            k_abs,
            mask,
            neg,
            plans,
            planner: Mutex::new(planner),
            padded: Mutex::new(HashMap::new()),
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored coefficients (`n²`).
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Largest retained wavenumber component under the 2/3 rule, `floor(n/3)`.
    pub fn dealias_cutoff(&self) -> i64 {
        self.cutoff
    }

    /// Grid spacing `2π / n`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn k1(&self) -> &[f64] {
        &self.k1
    }

    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    /// `|k|²` per coefficient.
    pub fn k_sq(&self) -> &[f64] {
        &self.k_sq
    }

    /// `|k|` per coefficient.
    pub fn k_abs(&self) -> &[f64] {
        &self.k_abs
    }

    /// 2/3-rule mask: `true` for kept modes.
    pub fn dealias_mask(&self) -> &[bool] {
        &self.mask
    }

    /// Index of `-k` for each index `k`.
    pub fn neg_index(&self, idx: usize) -> usize {
        self.neg[idx]
    }

    /// Integer wavenumber at a flattened index.
    pub fn wavenumber(&self, idx: usize) -> (i64, i64) {
        (
            wavenumber_of(idx / self.n, self.n),
            wavenumber_of(idx % self.n, self.n),
        )
    }

    /// Flattened index of `(k1, k2)`; `-n/2` aliases onto the Nyquist slot.
    pub fn index_of(&self, k1: i64, k2: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        let slot = |k: i64| -> Option<usize> {
            if k.abs() > half {
                None
            } else {
                Some(k.rem_euclid(self.n as i64) as usize)
            }
        };
        Some(slot(k1)? * self.n + slot(k2)?)
    }

    /// Whether the slot holds a Nyquist wavenumber in either component.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let half = self.n / 2;
        idx / self.n == half || idx % self.n == half
    }

    /// In-place unnormalized 2D transform (forward: `e^{-ik·x}`).
    pub(crate) fn fft2(&self, data: &mut [Complex64], forward: bool) {
        let plan = if forward {
            &self.plans.forward
        } else {
            &self.plans.inverse
        };
        fft2_with(plan.as_ref(), self.n, data);
    }

    /// Plans for an `m × m` evaluation grid (used for oversampled quadrature).
    pub(crate) fn padded_plans(&self, m: usize) -> Arc<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)> {
        let mut cache = self.padded.lock().expect("fft plan cache poisoned");
        cache
            .entry(m)
            .or_insert_with(|| {
                let mut planner = self.planner.lock().expect("fft planner poisoned");
                Arc::new((planner.plan_fft_forward(m), planner.plan_fft_inverse(m)))
            })
            .clone()
    }
}

pub(crate) fn wavenumber_of(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Row transforms, transpose, row transforms, transpose back.
pub(crate) fn fft2_with(plan: &dyn Fft<f64>, n: usize, data: &mut [Complex64]) {
    debug_assert_eq!(data.len(), n * n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    plan.process_with_scratch(data, &mut scratch);
    transpose_square(data, n);
    plan.process_with_scratch(data, &mut scratch);
    transpose_square(data, n);
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Smallest `2^a·3^b` that is even and at least `min`.
pub(crate) fn smooth_size(min: usize) -> usize {
    let mut best = usize::MAX;
    let mut p2 = 2usize;
    while p2 < 2 * min.max(2) {
        let mut v = p2;
        loop {
            if v >= min {
                best = best.min(v);
                break;
            }
            v *= 3;
        }
        p2 *= 2;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_and_small_grids() {
        assert!(FourierGrid::new(7).is_err());
        assert!(FourierGrid::new(6).is_err());
        assert!(FourierGrid::new(9).is_err());
        assert!(FourierGrid::new(8).is_ok());
    }

    #[test]
    fn wavenumbers_symmetric_under_negation() {
        let g = FourierGrid::new(12).unwrap();
        for idx in 0..g.len() {
            let (a, b) = g.wavenumber(idx);
            let (c, d) = g.wavenumber(g.neg_index(idx));
            let half = 6;
            // Nyquist components alias onto themselves.
            assert!(c == -a || (a.abs() == half && c == a));
            assert!(d == -b || (b.abs() == half && d == b));
        }
    }

    #[test]
    fn mask_follows_two_thirds_rule() {
        let g = FourierGrid::new(12).unwrap();
        assert_eq!(g.dealias_cutoff(), 4);
        assert!(!g.dealias_mask()[g.index_of(5, 0).unwrap()]);
        assert!(g.dealias_mask()[g.index_of(4, 0).unwrap()]);
        assert!(g.dealias_mask()[g.index_of(-4, 4).unwrap()]);
        assert!(!g.dealias_mask()[g.index_of(-4, -5).unwrap()]);
        let kept = g.dealias_mask().iter().filter(|&&m| m).count();
        assert_eq!(kept, 9 * 9);
    }

    #[test]
    fn index_round_trip() {
        let g = FourierGrid::new(16).unwrap();
        for idx in 0..g.len() {
            let (a, b) = g.wavenumber(idx);
            assert_eq!(g.index_of(a, b), Some(idx));
        }
        assert_eq!(g.index_of(-8, 0), g.index_of(8, 0));
        assert_eq!(g.index_of(9, 0), None);
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(1), 2);
        assert_eq!(smooth_size(33), 36);
        assert_eq!(smooth_size(64), 64);
        assert_eq!(smooth_size(65), 72);
    }
}
