//! Constants left abstract by the inequalities, calibrated by randomized
//! sweeps and frozen in `constants.json`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{coercivity_check, commutator_ratio, poincare_l4_ratio, TailConstants};
use crate::dynamics::{random_charge, random_velocity, ModelParams, SystemState};
use crate::spectral::{lp_norm, riesz, vector_lp_norm, FourierGrid, ScalarField, VectorField};

const FROZEN: &str = include_str!("../../constants.json");

/// Safety factor applied to sweep extrema before freezing.
pub const SAFETY: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    /// Coercivity constant `C₀`.
    pub c0: f64,
    /// Commutator constant `C_cal`.
    pub commutator: f64,
    /// Smallest sampled `∫q³Λq / ‖q‖⁴_{L⁴}`; recorded, not a bound.
    pub poincare_min: f64,
    /// Largest sampled `‖Rq‖²_{L⁴} / ‖q‖²_{L⁴}`.
    pub riesz_l4: f64,
    /// `C(4)` in the `L⁴` moment bound.
    pub moment_l4_c4: f64,
    /// `C(12)` in the `L⁴` moment bound.
    pub moment_l4_c12: f64,
    /// `C` in the `‖∇u‖²` moment bound.
    pub moment_grad_u_c: f64,
    pub tails: TailConstants,
}

impl Constants {
    /// The checked-in calibration.
    pub fn frozen() -> Constants {
        serde_json::from_str(FROZEN).expect("constants.json is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("constants serialize")
    }
}

/// Extremum of a sweep together with its sample count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub samples: usize,
    pub extremum: f64,
}

impl SweepResult {
    pub fn frozen(&self) -> f64 {
        SAFETY * self.extremum
    }
}

/// Draws a band-limited random field family member: shell, slope and
/// amplitude vary with the sample.
pub struct FieldSampler {
    grid: Arc<FourierGrid>,
    rng: ChaCha8Rng,
    next_seed: u64,
}

const SHELLS: [u32; 6] = [1, 2, 5, 10, 25, 50];
const SLOPES: [f64; 3] = [0.0, 1.0, 2.0];

impl FieldSampler {
    pub fn new(grid: &Arc<FourierGrid>, seed: u64) -> Self {
        FieldSampler {
            grid: grid.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_seed: seed.wrapping_mul(1_000_003),
        }
    }

    fn shape(&mut self) -> (u32, f64, f64, u64) {
        let shell = SHELLS[self.rng.random_range(0..SHELLS.len())];
        let slope = SLOPES[self.rng.random_range(0..SLOPES.len())];
        let amp = 10f64.powf(self.rng.random_range(-1.0..2.0));
        self.next_seed += 1;
        (shell, slope, amp, self.next_seed)
    }

    pub fn charge(&mut self) -> ScalarField {
        let (shell, slope, amp, seed) = self.shape();
        random_charge(&self.grid, shell, slope, amp, seed)
    }

    pub fn velocity(&mut self) -> VectorField {
        let (shell, slope, amp, seed) = self.shape();
        random_velocity(&self.grid, shell, slope, amp, seed)
    }

    pub fn state(&mut self) -> SystemState {
        SystemState {
            q: self.charge(),
            u: self.velocity(),
            t: 0.0,
        }
    }
}

/// Largest `C₀` needed by random pairs: against the zero state, against an
/// independent state, and against a small perturbation.
pub fn calibrate_c0(grid: &Arc<FourierGrid>, samples: usize, seed: u64) -> SweepResult {
    let mut s = FieldSampler::new(grid, seed);
    let params = ModelParams::zero(grid);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let a = s.state();
        let b = match s.rng.random_range(0..3) {
            0 => SystemState::zeros(grid),
            1 => s.state(),
            _ => {
                let d = s.state();
                let scale = 1e-3 * (a.energy() / d.energy().max(f64::MIN_POSITIVE)).sqrt();
                SystemState {
                    q: &a.q + &(&d.q * scale),
                    u: &a.u + &(&d.u * scale),
                    t: 0.0,
                }
            }
        };
        worst = worst.max(coercivity_check(&a, &b, &params, 0.0).required_c0());
    }
    SweepResult {
        samples,
        extremum: worst,
    }
}

/// Largest commutator ratio on random pairs.
pub fn calibrate_commutator(grid: &Arc<FourierGrid>, samples: usize, seed: u64) -> SweepResult {
    let mut s = FieldSampler::new(grid, seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let v = s.velocity();
        let rho = s.charge();
        worst = worst.max(commutator_ratio(&v, &rho).expect("mean-zero sample"));
    }
    SweepResult {
        samples,
        extremum: worst,
    }
}

/// Smallest Poincaré ratio on random mean-zero fields.
pub fn calibrate_poincare(grid: &Arc<FourierGrid>, samples: usize, seed: u64) -> SweepResult {
    let mut s = FieldSampler::new(grid, seed);
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        best = best.min(poincare_l4_ratio(&s.charge()).expect("nonzero mean-zero sample"));
    }
    SweepResult {
        samples,
        extremum: best,
    }
}

/// Largest `‖Rq‖²_{L⁴} / ‖q‖²_{L⁴}` on random fields.
pub fn calibrate_riesz_l4(grid: &Arc<FourierGrid>, samples: usize, seed: u64) -> SweepResult {
    let mut s = FieldSampler::new(grid, seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let q = s.charge();
        let r = riesz(&q).expect("mean-zero sample");
        worst = worst.max((vector_lp_norm(&r, 4) / lp_norm(&q, 4)).powi(2));
    }
    SweepResult {
        samples,
        extremum: worst,
    }
}

/// Tail-process constants implied by the static sweeps.
///
/// The velocity constant dominates `2‖Rq‖²_{L⁴}/‖q‖²_{L⁴}`, the forcing
/// factor 2 and the noise factor 1; the charge constants follow from
/// `6(g̃², q²) ≤ c‖q‖⁴ + (9/c)‖g̃‖⁴` with `c` half the Poincaré minimum.
pub fn tail_constants(poincare_min: f64, riesz_l4: f64) -> TailConstants {
    let c = 0.5 * poincare_min;
    TailConstants {
        velocity_c: SAFETY * (2.0 * riesz_l4).max(2.0),
        charge_c: c,
        charge_big_c: SAFETY * 9.0 / c,
        charge_bound_c: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_constants_are_positive() {
        let c = Constants::frozen();
        for v in [c.c0, c.commutator, c.poincare_min, c.riesz_l4, c.moment_l4_c4, c.moment_l4_c12, c.moment_grad_u_c] {
            assert!(v > 0.0 && v.is_finite());
        }
        let back: Constants = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sampler_is_reproducible() {
        let g = FourierGrid::new(16).unwrap();
        let a = FieldSampler::new(&g, 4).charge();
        let b = FieldSampler::new(&g, 4).charge();
        assert_eq!(a, b);
        assert!(a.is_mean_zero() && !a.is_zero());
    }

    #[test]
    fn frozen_values_cover_a_fresh_sweep() {
        let g = FourierGrid::new(16).unwrap();
        let c = Constants::frozen();
        assert!(calibrate_c0(&g, 20, 99).extremum <= c.c0);
        assert!(calibrate_commutator(&g, 20, 99).extremum <= c.commutator);
        assert!(calibrate_riesz_l4(&g, 20, 99).extremum <= c.riesz_l4);
        assert!(calibrate_poincare(&g, 20, 99).extremum >= c.poincare_min * (1.0 - 1e-12));
    }
}
