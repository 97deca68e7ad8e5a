//! Pseudo-spectral simulation and verification toolkit for the stochastic
//! electroconvection system on the torus `T² = [0, 2π)²`:
//!
//! ```text
//! dq + u·∇q dt + Λq dt = ΔΦ dt + g̃ dW
//! du + u·∇u dt − Δu dt + ∇p dt = −qRq dt − q∇Φ dt + f dt + g dW,   ∇·u = 0
//! ```
//!
//! where `Λ = (−Δ)^{1/2}` and `R = ∇Λ^{-1}` is the Riesz transform.

pub mod spectral;
pub mod noise;
pub mod dynamics;
pub mod diagnostics;
pub mod ergodicity;
pub mod calibration;
pub mod coupling;
pub mod cli_io;
