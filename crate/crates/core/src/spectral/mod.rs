//! Fourier grid, fields, multiplier operators, dealiased products and norms.

mod field;
mod grid;
mod nonlinear;
mod norms;
mod ops;

use thiserror::Error;

pub use field::{exact_quadrature_size, integrate_product, ScalarField, VectorField};
pub use grid::{FourierGrid, TORUS_AREA};
pub use nonlinear::{
    advect_scalar, advect_vector, charge_force, dot_product, forward_pair, inverse_pair, product,
    scale_vector,
};
pub use norms::{
    homogeneous_norm_sq, homogeneous_vector_norm_sq, inhomogeneous_norm_sq, l4_norm_pow4, lp_norm,
    norms, sup_norm, vector_lp_norm, NormReport, NormRequest,
};
pub use ops::{
    apply_lambda, dealias, dealias_in_place, dealias_vector, divergence, gradient, laplacian,
    leray_project, leray_project_in_place, riesz, vector_laplacian,
};
pub(crate) use ops::{lambda_unchecked, riesz_unchecked};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("grid size {0} must be even and at least 8")]
    InvalidGrid(usize),
    #[error("fields live on different grids (n = {0} vs n = {1})")]
    GridMismatch(usize, usize),
    #[error("expected {expected} coefficients, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("{0} requires a mean-zero field")]
    NonZeroMean(&'static str),
    #[error("wavenumber ({0}, {1}) is outside the grid")]
    ModeOutOfRange(i64, i64),
    #[error("Hermitian residual {0:e} exceeds tolerance")]
    HermitianResidual(f64),
}
