//! Energy ledgers, budget residuals and numerical checks of the a priori
//! inequalities satisfied by the system.

mod budget;
mod checks;
mod constants;
mod ledger;

use thiserror::Error;

use crate::spectral::SpectralError;

pub use budget::{
    charge_sup_process, energy_balance_residual, log_sobolev_ledger, tail_event_check, velocity_sup_process,
    BudgetTerms, LogSobolevSeries, ResidualReport, TailConstants, TailReport,
};
pub use checks::{
    coercivity_check, commutator_ratio, continuity_bound_check, grad_potential_sup_sq, l4_budget_check, l4_terms,
    poincare_l4_ratio, rcond, CoercivityReport, ContinuityReport, ContinuityRow, L4BudgetReport, L4Terms,
};
pub use constants::{
    calibrate_c0, calibrate_commutator, calibrate_poincare, calibrate_riesz_l4, tail_constants, Constants, FieldSampler,
    SweepResult, SAFETY,
};
pub use ledger::{EnergyLedger, LedgerError, LedgerMeta, LedgerRecorder, LedgerRow, LedgerSettings, SourceNorms};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("field is identically zero")]
    ZeroField,
    #[error("field has nonzero mean")]
    NonZeroMean,
    #[error("inputs do not match: {0}")]
    Mismatch(String),
    #[error("ledger has no rows")]
    EmptyLedger,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}
