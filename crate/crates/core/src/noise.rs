//! Finite-mode Wiener forcing `g̃ dW`, `g dW`, counter-based Brownian
//! increments and the stochastic convolutions `φ̃`, `φ`.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{
    exact_quadrature_size, homogeneous_norm_sq, FourierGrid, ScalarField, VectorField, TORUS_AREA,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("noise amplitude on the zero mode is not allowed")]
    ZeroModeAmplitude,
    #[error("negative noise amplitude {0}")]
    NegativeAmplitude(f64),
    #[error("noise mode ({0}, {1}) lies outside the dealiased band")]
    ModeOutOfRange(i64, i64),
    #[error("invalid noise parameter: {0}")]
    Invalid(String),
}

/// Which equation a Brownian direction forces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseTarget {
    Charge,
    Velocity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Cos,
    Sin,
}

/// Isotropic band of forced modes: every `k` with `0 < |k|² ≤ max_shell`
/// gets amplitude `sigma / |k|^alpha` in both phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBand {
    pub max_shell: u32,
    pub sigma: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    2.0
}

/// A single explicitly listed direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseMode {
    pub target: NoiseTarget,
    pub k: [i64; 2],
    pub phase: Phase,
    pub amplitude: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub charge: Option<NoiseBand>,
    #[serde(default)]
    pub velocity: Option<NoiseBand>,
    #[serde(default)]
    pub modes: Vec<NoiseMode>,
}

/// One Brownian direction `l`: the field `amplitude·√2·cos(k·x)` (or `sin`)
/// for the charge, or `amplitude·√2·(k^⊥/|k|)cos(k·x)` for the velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseDirection {
    pub target: NoiseTarget,
    pub k: [i64; 2],
    pub phase: Phase,
    pub amplitude: f64,
}

#[derive(Clone, Debug)]
struct SparseDirection {
    target: NoiseTarget,
    idx: usize,
    neg: usize,
    /// coefficient at `k` of the unit-direction scalar part
    coeff: Complex64,
    /// velocity direction `k^⊥/|k|`
    perp: [f64; 2],
}

/// Finite family of noise coefficient fields `{g̃_l}`, `{g_l}`.
#[derive(Clone, Debug)]
pub struct NoiseBasis {
    grid: Arc<FourierGrid>,
    directions: Vec<NoiseDirection>,
    sparse: Vec<SparseDirection>,
}

/// Lattice points with `0 < |k|² ≤ shell` on the half lattice (one of each
/// `±k` pair), in lexicographic order.
pub fn half_lattice(shell: u32) -> Vec<[i64; 2]> {
    let r = (shell as f64).sqrt().floor() as i64;
    let mut out = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            let s = a * a + b * b;
            if s == 0 || s > shell as i64 {
                continue;
            }
            if a > 0 || (a == 0 && b > 0) {
                out.push([a, b]);
            }
        }
    }
    out
}

impl NoiseBasis {
    pub fn empty(grid: &Arc<FourierGrid>) -> Self {
        NoiseBasis {
            grid: grid.clone(),
            directions: Vec::new(),
            sparse: Vec::new(),
        }
    }

    pub fn build(grid: &Arc<FourierGrid>, config: &NoiseConfig) -> Result<Self, NoiseError> {
        let mut directions = Vec::new();
        for (target, band) in [
            (NoiseTarget::Charge, &config.charge),
            (NoiseTarget::Velocity, &config.velocity),
        ] {
            let Some(band) = band else { continue };
            if band.sigma < 0.0 {
                return Err(NoiseError::NegativeAmplitude(band.sigma));
            }
            if band.alpha < 0.0 || !band.alpha.is_finite() {
                return Err(NoiseError::Invalid(format!("alpha = {}", band.alpha)));
            }
            for k in half_lattice(band.max_shell) {
                let kk = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
                let amplitude = band.sigma / kk.powf(band.alpha);
                for phase in [Phase::Cos, Phase::Sin] {
                    directions.push(NoiseDirection {
                        target,
                        k,
                        phase,
                        amplitude,
                    });
                }
            }
        }
        for m in &config.modes {
            if m.k == [0, 0] {
                return Err(NoiseError::ZeroModeAmplitude);
            }
            if m.amplitude < 0.0 {
                return Err(NoiseError::NegativeAmplitude(m.amplitude));
            }
            directions.push(NoiseDirection {
                target: m.target,
                k: m.k,
                phase: m.phase,
                amplitude: m.amplitude,
            });
        }
        Self::from_directions(grid, directions)
    }

    pub fn from_directions(grid: &Arc<FourierGrid>, directions: Vec<NoiseDirection>) -> Result<Self, NoiseError> {
        let cutoff = grid.dealias_cutoff();
        let mut sparse = Vec::with_capacity(directions.len());
        for d in &directions {
            let [a, b] = d.k;
            if (a, b) == (0, 0) {
                return Err(NoiseError::ZeroModeAmplitude);
            }
            if a.abs() > cutoff || b.abs() > cutoff {
                return Err(NoiseError::ModeOutOfRange(a, b));
            }
            let idx = grid.index_of(a, b).ok_or(NoiseError::ModeOutOfRange(a, b))?;
            let half = d.amplitude * SQRT_2 * 0.5;
            let coeff = match d.phase {
                Phase::Cos => Complex64::new(half, 0.0),
                Phase::Sin => Complex64::new(0.0, -half),
            };
            let kk = ((a * a + b * b) as f64).sqrt();
            sparse.push(SparseDirection {
                target: d.target,
                idx,
                neg: grid.neg_index(idx),
                coeff,
                perp: [-(b as f64) / kk, a as f64 / kk],
            });
        }
        Ok(NoiseBasis {
            grid: grid.clone(),
            directions,
            sparse,
        })
    }

    pub fn grid(&self) -> &Arc<FourierGrid> {
        &self.grid
    }

    /// Number of Brownian directions `L`.
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[NoiseDirection] {
        &self.directions
    }

    pub fn count(&self, target: NoiseTarget) -> usize {
        self.directions.iter().filter(|d| d.target == target).count()
    }

    /// `g̃_l` (zero for velocity directions).
    pub fn charge_field(&self, l: usize) -> ScalarField {
        let mut f = ScalarField::zeros(&self.grid);
        let s = &self.sparse[l];
        if s.target == NoiseTarget::Charge {
            let c = f.coeffs_mut();
            c[s.idx] = s.coeff;
            c[s.neg] = s.coeff.conj();
        }
        f
    }

    /// `g_l` (zero for charge directions).
    pub fn velocity_field(&self, l: usize) -> VectorField {
        let mut v = VectorField::zeros(&self.grid);
        let s = &self.sparse[l];
        if s.target == NoiseTarget::Velocity {
            for (comp, p) in [(&mut v.x, s.perp[0]), (&mut v.y, s.perp[1])] {
                let c = comp.coeffs_mut();
                c[s.idx] = s.coeff * p;
                c[s.neg] = (s.coeff * p).conj();
            }
        }
        v
    }

    /// `(Σ_l g̃_l ΔW_l, Σ_l g_l ΔW_l)`.
    pub fn apply(&self, increments: &[f64]) -> (ScalarField, VectorField) {
        let mut q = ScalarField::zeros(&self.grid);
        let mut u = VectorField::zeros(&self.grid);
        self.accumulate(increments, &mut q, &mut u);
        (q, u)
    }

    /// Adds `Σ_l g̃_l ΔW_l` into `q` and `Σ_l g_l ΔW_l` into `u`.
    pub fn accumulate(&self, increments: &[f64], q: &mut ScalarField, u: &mut VectorField) {
        assert_eq!(increments.len(), self.len(), "one increment per direction");
        for (s, &dw) in self.sparse.iter().zip(increments) {
            let c = s.coeff * dw;
            match s.target {
                NoiseTarget::Charge => {
                    let qc = q.coeffs_mut();
                    qc[s.idx] += c;
                    qc[s.neg] += c.conj();
                }
                NoiseTarget::Velocity => {
                    for (comp, p) in [(&mut u.x, s.perp[0]), (&mut u.y, s.perp[1])] {
                        let cc = comp.coeffs_mut();
                        cc[s.idx] += c * p;
                        cc[s.neg] += (c * p).conj();
                    }
                }
            }
        }
    }

    /// `‖g̃‖² = Σ_l ‖Λ^s g̃_l‖²_{L²}` (homogeneous; `s = 0` gives `L²`).
    pub fn charge_norm_sq(&self, s: f64) -> f64 {
        (0..self.len())
            .filter(|&l| self.directions[l].target == NoiseTarget::Charge)
            .map(|l| homogeneous_norm_sq(&self.charge_field(l), s))
            .sum()
    }

    /// `‖g‖² = Σ_l ‖Λ^s g_l‖²_{L²}`; `s = 1` gives `‖∇g‖²`.
    pub fn velocity_norm_sq(&self, s: f64) -> f64 {
        (0..self.len())
            .filter(|&l| self.directions[l].target == NoiseTarget::Velocity)
            .map(|l| {
                let v = self.velocity_field(l);
                homogeneous_norm_sq(&v.x, s) + homogeneous_norm_sq(&v.y, s)
            })
            .sum()
    }

    /// `Σ_l Σ_k (1 + |k|^s)² |ĝ_{l,k}|²` for the charge family.
    pub fn charge_sobolev_sq(&self, s: f64) -> f64 {
        (0..self.len())
            .filter(|&l| self.directions[l].target == NoiseTarget::Charge)
            .map(|l| crate::spectral::inhomogeneous_norm_sq(&self.charge_field(l), s))
            .sum()
    }

    /// Same coefficient sum for the velocity family.
    pub fn velocity_sobolev_sq(&self, s: f64) -> f64 {
        (0..self.len())
            .filter(|&l| self.directions[l].target == NoiseTarget::Velocity)
            .map(|l| {
                let v = self.velocity_field(l);
                crate::spectral::inhomogeneous_norm_sq(&v.x, s) + crate::spectral::inhomogeneous_norm_sq(&v.y, s)
            })
            .sum()
    }

    /// `‖g̃‖^p_{L^p} = ∫ (Σ_l g̃_l(x)²)^{p/2} dx` by uniform quadrature.
    /// Exact for even `p`.
    pub fn charge_lp_pow(&self, p: u32) -> f64 {
        let charge: Vec<usize> = (0..self.len())
            .filter(|&l| self.directions[l].target == NoiseTarget::Charge)
            .collect();
        if charge.is_empty() {
            return 0.0;
        }
        let kmax = charge
            .iter()
            .map(|&l| {
                let [a, b] = self.directions[l].k;
                a.abs().max(b.abs())
            })
            .max()
            .unwrap_or(0);
        let m = exact_quadrature_size(self.grid.n(), &vec![kmax; p as usize]);
        let mut sum_sq = vec![0.0; m * m];
        for &l in &charge {
            let s = self.charge_field(l).to_physical_padded(m);
            for (acc, v) in sum_sq.iter_mut().zip(&s) {
                *acc += v * v;
            }
        }
        sum_sq.iter().map(|v| v.powf(p as f64 / 2.0)).sum::<f64>() * TORUS_AREA / (m * m) as f64
    }

    /// Pointwise `Σ_l g̃_l(x)²` on an `m × m` grid.
    pub fn charge_variance_density(&self, m: usize) -> Vec<f64> {
        let mut sum_sq = vec![0.0; m * m];
        for l in 0..self.len() {
            if self.directions[l].target != NoiseTarget::Charge {
                continue;
            }
            let s = self.charge_field(l).to_physical_padded(m);
            for (acc, v) in sum_sq.iter_mut().zip(&s) {
                *acc += v * v;
            }
        }
        sum_sq
    }

    /// Whether every Fourier mode with `0 < |k|² ≤ shell` is forced in both
    /// phases in both equations (the low-mode range condition).
    pub fn covers_shell(&self, shell: u32) -> bool {
        half_lattice(shell).into_iter().all(|k| {
            [NoiseTarget::Charge, NoiseTarget::Velocity].iter().all(|&t| {
                [Phase::Cos, Phase::Sin].iter().all(|&ph| {
                    self.directions
                        .iter()
                        .any(|d| d.target == t && d.phase == ph && d.amplitude > 0.0 && (d.k == k || d.k == [-k[0], -k[1]]))
                })
            })
        })
    }
}

/// Counter-based Brownian increments keyed by `(seed, path, step)`.
///
/// Each fine step owns a disjoint block of the ChaCha keystream selected by
/// stream id `path` and word position `step << 32`, so any step of any
/// path can be generated independently. A stream with `substeps = r`
/// returns the sum of `r` consecutive fine increments, which keeps coarse
/// and fine runs on the same Brownian path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementStream {
    pub seed: u64,
    pub path: u64,
    fine_dt: f64,
    substeps: u32,
    step: u64,
}

impl IncrementStream {
    pub fn new(seed: u64, path: u64, dt: f64) -> Self {
        IncrementStream {
            seed,
            path,
            fine_dt: dt,
            substeps: 1,
            step: 0,
        }
    }

    /// Stream whose increments span `substeps` fine steps of length `fine_dt`.
    pub fn coarsened(seed: u64, path: u64, fine_dt: f64, substeps: u32) -> Self {
        assert!(substeps >= 1);
        IncrementStream {
            seed,
            path,
            fine_dt,
            substeps,
            step: 0,
        }
    }

    pub fn dt(&self) -> f64 {
        self.fine_dt * self.substeps as f64
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Increments for coarse step `step`, independent of the internal counter.
    pub fn increments_at(&self, step: u64, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count];
        if count == 0 || self.fine_dt == 0.0 {
            return out;
        }
        let sd = self.fine_dt.sqrt();
        for fine in 0..self.substeps as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(self.path);
            rng.set_word_pos(((step * self.substeps as u64 + fine) as u128) << 32);
            for v in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sd * z;
            }
        }
        out
    }

    /// Increments for the current step; advances the counter.
    pub fn sample_increments(&mut self, count: usize) -> Vec<f64> {
        let out = self.increments_at(self.step, count);
        self.step += 1;
        out
    }
}

/// Decay factors `e^{-m dt}` with `m = |k| + ε|k|²` for the charge and
/// `m = |k|²` for the velocity.
#[derive(Clone, Debug)]
pub struct LinearPropagator {
    pub dt: f64,
    pub epsilon: f64,
    pub charge: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl LinearPropagator {
    pub fn new(grid: &FourierGrid, dt: f64, epsilon: f64) -> Self {
        let charge = grid
            .k_abs()
            .iter()
            .zip(grid.k_sq())
            .map(|(k, k2)| (-(k + epsilon * k2) * dt).exp())
            .collect();
        let velocity = grid.k_sq().iter().map(|k2| (-k2 * dt).exp()).collect();
        LinearPropagator {
            dt,
            epsilon,
            charge,
            velocity,
        }
    }

    pub fn apply_charge(&self, f: &mut ScalarField) {
        for (c, d) in f.coeffs_mut().iter_mut().zip(&self.charge) {
            *c *= *d;
        }
    }

    pub fn apply_velocity(&self, v: &mut VectorField) {
        for comp in [&mut v.x, &mut v.y] {
            for (c, d) in comp.coeffs_mut().iter_mut().zip(&self.velocity) {
                *c *= *d;
            }
        }
    }
}

/// Stochastic convolutions solving `dφ̃ + Λφ̃ dt = g̃ dW`, `dφ − Δφ dt = g dW`
/// from zero initial data.
#[derive(Clone, Debug)]
pub struct StochasticConvolution {
    pub charge: ScalarField,
    pub velocity: VectorField,
    pub t: f64,
    epsilon: f64,
    propagator: Option<LinearPropagator>,
}

impl StochasticConvolution {
    pub fn new(grid: &Arc<FourierGrid>) -> Self {
        Self::with_epsilon(grid, 0.0)
    }

    pub fn with_epsilon(grid: &Arc<FourierGrid>, epsilon: f64) -> Self {
        StochasticConvolution {
            charge: ScalarField::zeros(grid),
            velocity: VectorField::zeros(grid),
            t: 0.0,
            epsilon,
            propagator: None,
        }
    }

    /// `φ̂(t+dt) = e^{-m dt}(φ̂(t) + ĝ·ΔW)` per mode.
    pub fn update(&mut self, basis: &NoiseBasis, increments: &[f64], dt: f64) {
        if self.propagator.as_ref().map(|p| p.dt) != Some(dt) {
            self.propagator = Some(LinearPropagator::new(basis.grid(), dt, self.epsilon));
        }
        basis.accumulate(increments, &mut self.charge, &mut self.velocity);
        let p = self.propagator.as_ref().expect("propagator set above");
        p.apply_charge(&mut self.charge);
        p.apply_velocity(&mut self.velocity);
        self.t += dt;
    }
}
