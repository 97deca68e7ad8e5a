//! Drift assembly and exponential Euler–Maruyama time stepping.

mod drift;
mod ensemble;
mod init;
mod integrate;
mod stepper;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{FourierGrid, ScalarField, SpectralError, VectorField};

pub use drift::{compute_drift, DriftValue};
pub use ensemble::run_ensemble;
pub use init::{random_charge, random_state, random_velocity, InitialData};
pub use integrate::{integrate, integrate_with, StepSchedule, Trajectory};
pub use stepper::{reconstruct, step, step_pathwise, CflPolicy, Stepper};

#[derive(Debug, Error, Clone)]
pub enum DynamicsError {
    #[error("solution blew up at t = {t}")]
    BlowUp { t: f64, last_valid: Box<SystemState> },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("stochastic convolution at t = {sc} but state at t = {state}")]
    NotSynchronized { sc: f64, state: f64 },
}

/// `(q, u)` at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub q: ScalarField,
    pub u: VectorField,
    pub t: f64,
}

impl SystemState {
    pub fn zeros(grid: &Arc<FourierGrid>) -> Self {
        SystemState {
            q: ScalarField::zeros(grid),
            u: VectorField::zeros(grid),
            t: 0.0,
        }
    }

    /// Builds a state, projecting `u` and removing the mean of `q`.
    pub fn new(mut q: ScalarField, mut u: VectorField, t: f64) -> Result<Self, SpectralError> {
        q.same_grid(&u.x)?;
        q.remove_mean();
        crate::spectral::leray_project_in_place(&mut u);
        Ok(SystemState { q, u, t })
    }

    pub fn grid(&self) -> &Arc<FourierGrid> {
        self.q.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.u.is_finite()
    }

    /// `‖Λ^{-1/2}q‖² + ‖u‖²`.
    pub fn energy(&self) -> f64 {
        crate::spectral::homogeneous_norm_sq(&self.q, -0.5) + self.u.l2_norm_sq()
    }

    pub fn difference(&self, other: &SystemState) -> SystemState {
        SystemState {
            q: &self.q - &other.q,
            u: &self.u - &other.u,
            t: self.t,
        }
    }

    pub fn scaled(&self, s: f64) -> SystemState {
        SystemState {
            q: &self.q * s,
            u: &self.u * s,
            t: self.t,
        }
    }
}

/// Static potential `Φ`, body force `f` and viscous regularization `ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub potential: ScalarField,
    pub forcing: VectorField,
    pub epsilon: f64,
}

/// Tolerance on `max |k·f̂|` and on the mean of `f`.
const FORCING_TOL: f64 = 1e-12;

impl ModelParams {
    pub fn zero(grid: &Arc<FourierGrid>) -> Self {
        ModelParams {
            potential: ScalarField::zeros(grid),
            forcing: VectorField::zeros(grid),
            epsilon: 0.0,
        }
    }

    pub fn new(potential: ScalarField, forcing: VectorField, epsilon: f64) -> Result<Self, DynamicsError> {
        let p = ModelParams {
            potential,
            forcing,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        self.potential.same_grid(&self.forcing.x)?;
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(DynamicsError::InvalidParams(format!("epsilon = {} must be finite and ≥ 0", self.epsilon)));
        }
        if !self.potential.is_finite() || !self.forcing.is_finite() {
            return Err(DynamicsError::InvalidParams("non-finite potential or forcing".into()));
        }
        let scale = self.forcing.max_abs_coeff().max(1.0);
        if self.forcing.divergence_residual() > FORCING_TOL * scale {
            return Err(DynamicsError::InvalidParams("forcing is not divergence-free".into()));
        }
        let [mx, my] = self.forcing.mean();
        if mx.abs().max(my.abs()) > FORCING_TOL * scale {
            return Err(DynamicsError::InvalidParams("forcing has nonzero mean".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<FourierGrid> {
        self.potential.grid()
    }

    pub fn has_potential(&self) -> bool {
        self.potential.coeffs().iter().skip(1).any(|c| c.norm() > 0.0)
    }
}

/// Oracle-friendly parameter presets used across tests and the CLI.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    /// Kolmogorov-type forcing `amplitude·(sin(k y), 0)` in wavenumber `k`.
    #[serde(default)]
    pub kolmogorov: Option<(f64, i64)>,
    /// Potential `amplitude·cos(k₁x₁ + k₂x₂)`.
    #[serde(default)]
    pub potential: Option<(f64, [i64; 2])>,
}

impl ForcingSpec {
    pub fn build(&self, grid: &Arc<FourierGrid>, epsilon: f64) -> Result<ModelParams, DynamicsError> {
        let mut params = ModelParams::zero(grid);
        params.epsilon = epsilon;
        if let Some((amp, k)) = self.kolmogorov {
            params.forcing.x = ScalarField::sin_mode(grid, 0, k, amp)?;
        }
        if let Some((amp, [a, b])) = self.potential {
            params.potential = ScalarField::cos_mode(grid, a, b, amp)?;
        }
        params.validate()?;
        Ok(params)
    }
}
