use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SystemState;
use crate::noise::half_lattice;
use crate::spectral::{FourierGrid, ScalarField, VectorField};

/// Band-limited random initial data with prescribed `L²` norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    /// Modes with `0 < |k|² ≤ shell` are populated.
    #[serde(default = "default_shell")]
    pub shell: u32,
    /// Coefficient scale `|k|^{-slope}`.
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default)]
    pub charge_l2: f64,
    #[serde(default)]
    pub velocity_l2: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_shell() -> u32 {
    9
}

fn default_slope() -> f64 {
    1.0
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData {
            shell: default_shell(),
            slope: default_slope(),
            charge_l2: 0.0,
            velocity_l2: 0.0,
            seed: 0,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // streams far above any ensemble path index
    rng.set_stream(stream | 1 << 62);
    rng
}

fn random_coeffs(grid: &Arc<FourierGrid>, shell: u32, slope: f64, rng: &mut ChaCha8Rng) -> ScalarField {
    let cut = grid.dealias_cutoff();
    let mut f = ScalarField::zeros(grid);
    for [a, b] in half_lattice(shell) {
        if a.abs() > cut || b.abs() > cut {
            continue;
        }
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let w = ((a * a + b * b) as f64).sqrt().powf(-slope);
        f.set_mode(a, b, Complex64::new(re, im) * w).expect("mode inside the grid");
    }
    f
}

/// Mean-zero charge with `‖q‖_{L²} = l2`.
pub fn random_charge(grid: &Arc<FourierGrid>, shell: u32, slope: f64, l2: f64, seed: u64) -> ScalarField {
    let mut q = random_coeffs(grid, shell, slope, &mut rng_for(seed, 0));
    let n = q.l2_norm_sq().sqrt();
    if n > 0.0 {
        q.scale(l2 / n);
    }
    q
}

/// Divergence-free velocity `∇^⊥ψ` with `‖u‖_{L²} = l2`.
pub fn random_velocity(grid: &Arc<FourierGrid>, shell: u32, slope: f64, l2: f64, seed: u64) -> VectorField {
    let psi = random_coeffs(grid, shell, slope, &mut rng_for(seed, 1));
    let grad = crate::spectral::gradient(&psi);
    let mut u = VectorField {
        x: &grad.y * -1.0,
        y: grad.x,
    };
    let n = u.l2_norm_sq().sqrt();
    if n > 0.0 {
        u.scale(l2 / n);
    }
    u
}

pub fn random_state(grid: &Arc<FourierGrid>, data: &InitialData) -> SystemState {
    SystemState {
        q: random_charge(grid, data.shell, data.slope, data.charge_l2, data.seed),
        u: random_velocity(grid, data.shell, data.slope, data.velocity_l2, data.seed),
        t: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_and_invariants() {
        let g = FourierGrid::new(16).unwrap();
        let s = random_state(
            &g,
            &InitialData {
                charge_l2: 2.0,
                velocity_l2: 3.0,
                seed: 5,
                ..Default::default()
            },
        );
        assert!((s.q.l2_norm_sq().sqrt() - 2.0).abs() < 1e-12);
        assert!((s.u.l2_norm_sq().sqrt() - 3.0).abs() < 1e-12);
        assert!(s.q.is_mean_zero());
        assert!(s.u.divergence_residual() < 1e-14);
        assert!(s.q.max_wavenumber() <= 3);
    }

    #[test]
    fn seeds_differ_and_repeat() {
        let g = FourierGrid::new(16).unwrap();
        let a = random_charge(&g, 4, 1.0, 1.0, 1);
        assert_eq!(a, random_charge(&g, 4, 1.0, 1.0, 1));
        assert_ne!(a, random_charge(&g, 4, 1.0, 1.0, 2));
    }
}
