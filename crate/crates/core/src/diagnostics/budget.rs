//! Residuals of ledger-level energy identities and tail-event statistics.

use serde::{Deserialize, Serialize};

use super::{DiagnosticsError, EnergyLedger, LedgerRow};

/// Which stochastic terms enter the energy balance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetTerms {
    /// Subtract the Itô correction `(‖Λ^{-1/2}g̃‖² + ‖g‖²)·t`.
    pub ito: bool,
    /// Subtract the accumulated martingale.
    pub martingale: bool,
}

impl BudgetTerms {
    pub const DETERMINISTIC: BudgetTerms = BudgetTerms {
        ito: false,
        martingale: false,
    };
    pub const FULL: BudgetTerms = BudgetTerms {
        ito: true,
        martingale: true,
    };
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub times: Vec<f64>,
    pub residual: Vec<f64>,
    /// `max |residual| / max(E(0), ε)`
    pub max_relative: f64,
}

/// `E(t) − E(0) + 2∫(‖q‖² + ‖∇u‖²) − ∫sources − [Itô] − [martingale]`
/// along a ledger.
pub fn energy_balance_residual(ledger: &EnergyLedger, terms: BudgetTerms) -> Result<ResidualReport, DiagnosticsError> {
    let first = ledger.rows.first().ok_or(DiagnosticsError::EmptyLedger)?;
    let residual: Vec<f64> = ledger
        .rows
        .iter()
        .map(|r| energy_residual_row(first, r, terms))
        .collect();
    let scale = first.energy.max(f64::MIN_POSITIVE);
    let max_abs = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(ResidualReport {
        times: ledger.times(),
        residual,
        max_relative: max_abs / scale,
    })
}

fn energy_residual_row(first: &LedgerRow, r: &LedgerRow, terms: BudgetTerms) -> f64 {
    let mut res = r.energy - first.energy + 2.0 * (r.int_q_l2_sq + r.int_grad_u_sq) - r.int_sources;
    if terms.ito {
        res -= r.ito_energy - first.ito_energy;
    }
    if terms.martingale {
        res -= r.mart_energy - first.mart_energy;
    }
    res
}

/// Time series of `log(1 + ‖Λ^{k+3/2}q‖² + ‖Λ^{k+3}u‖²)` with its running
/// time average.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LogSobolevSeries {
    pub k: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `(1/t)∫₀ᵗ value`; the first entry is the initial value.
    pub running_average: Vec<f64>,
}

impl LogSobolevSeries {
    /// Means of the first and second halves of the samples after `burn_in`.
    pub fn half_means(&self, burn_in: f64) -> Option<(f64, f64)> {
        let v: Vec<f64> = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t >= burn_in)
            .map(|(_, v)| *v)
            .collect();
        if v.len() < 2 {
            return None;
        }
        let h = v.len() / 2;
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        Some((mean(&v[..h]), mean(&v[h..])))
    }
}

/// Extracts the log-Sobolev series recorded in `ledger`.
///
/// The index must satisfy `0 ≤ k ≤ ⌊n/3⌋`.
pub fn log_sobolev_ledger(ledger: &EnergyLedger) -> Result<LogSobolevSeries, DiagnosticsError> {
    let k = ledger.meta.sobolev_k;
    let cutoff = (ledger.meta.n / 3) as f64;
    if !(k >= 0.0 && k <= cutoff) {
        return Err(DiagnosticsError::Mismatch(format!("sobolev index {k} outside [0, {cutoff}]")));
    }
    let first = ledger.rows.first().ok_or(DiagnosticsError::EmptyLedger)?;
    let running_average = ledger
        .rows
        .iter()
        .map(|r| {
            let dt = r.t - first.t;
            if dt > 0.0 {
                r.int_log_sobolev / dt
            } else {
                r.log_sobolev
            }
        })
        .collect();
    Ok(LogSobolevSeries {
        k,
        times: ledger.times(),
        values: ledger.column(|r| r.log_sobolev),
        running_average,
    })
}

/// Constants of the two supremum processes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailConstants {
    /// `C` in the velocity process.
    pub velocity_c: f64,
    /// `c` in the charge process.
    pub charge_c: f64,
    /// `C` multiplying `‖g̃‖⁴_{L⁴}t` in the charge process.
    pub charge_big_c: f64,
    /// `C` in the charge tail bound `C(‖g̃‖¹⁶ + ‖q₀‖¹⁶)/(R+1)`.
    pub charge_bound_c: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub radii: Vec<f64>,
    /// Empirical `P(sup X > R)` for the velocity process.
    pub velocity_frequency: Vec<f64>,
    /// `exp(−R/(8‖g‖²))`
    pub velocity_bound: Vec<f64>,
    /// Empirical `P(sup Y > R)` for the charge process.
    pub charge_frequency: Vec<f64>,
    /// `C(‖g̃‖¹⁶_{L⁴} + ‖q₀‖¹⁶_{L⁴})/(R+1)`, with `‖q₀‖` the ensemble maximum.
    pub charge_bound: Vec<f64>,
    /// Per-path `sup_t X(t)`.
    pub velocity_sup: Vec<f64>,
    /// Per-path `sup_t Y(t)`.
    pub charge_sup: Vec<f64>,
    pub monotone: bool,
    pub below_bounds: bool,
}

/// `sup_t [‖∇u‖² + ½∫‖Δu‖² − ‖∇u₀‖² − C(‖f‖² + ‖∇g‖²)t − C∫‖q‖⁴_{L⁴}]`
pub fn velocity_sup_process(ledger: &EnergyLedger, c: f64) -> Result<f64, DiagnosticsError> {
    let first = ledger.rows.first().ok_or(DiagnosticsError::EmptyLedger)?;
    let s = &ledger.meta.sources;
    Ok(ledger
        .rows
        .iter()
        .map(|r| {
            let t = r.t - first.t;
            r.u_grad.powi(2) + 0.5 * r.int_lap_u_sq
                - first.u_grad.powi(2)
                - c * (s.forcing_l2_sq + s.velocity_noise_grad_sq) * t
                - c * r.int_q_l4_pow4
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `sup_t [‖q‖⁴_{L⁴} + c∫‖q‖⁴_{L⁴} − ‖q₀‖⁴_{L⁴} − 2 − C‖g̃‖⁴_{L⁴}t]`
pub fn charge_sup_process(ledger: &EnergyLedger, c: f64, big_c: f64) -> Result<f64, DiagnosticsError> {
    let first = ledger.rows.first().ok_or(DiagnosticsError::EmptyLedger)?;
    let g4 = ledger.meta.sources.charge_noise_l4_pow4;
    Ok(ledger
        .rows
        .iter()
        .map(|r| {
            let t = r.t - first.t;
            r.q_l4.powi(4) + c * r.int_q_l4_pow4 - first.q_l4.powi(4) - 2.0 - big_c * g4 * t
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Empirical exceedance frequencies of the two supremum processes.
pub fn tail_event_check(
    ledgers: &[EnergyLedger],
    constants: &TailConstants,
    radii: &[f64],
) -> Result<TailReport, DiagnosticsError> {
    if ledgers.is_empty() {
        return Err(DiagnosticsError::EmptyLedger);
    }
    let velocity_sup = ledgers
        .iter()
        .map(|l| velocity_sup_process(l, constants.velocity_c))
        .collect::<Result<Vec<_>, _>>()?;
    let charge_sup = ledgers
        .iter()
        .map(|l| charge_sup_process(l, constants.charge_c, constants.charge_big_c))
        .collect::<Result<Vec<_>, _>>()?;
    let m = ledgers.len() as f64;
    let freq = |sups: &[f64], r: f64| sups.iter().filter(|&&s| s > r).count() as f64 / m;
    let src = &ledgers[0].meta.sources;
    let g2 = src.velocity_noise_l2_sq;
    let g16 = src.charge_noise_l4_pow4.powi(4);
    let q16 = ledgers
        .iter()
        .map(|l| l.rows[0].q_l4.powi(16))
        .fold(0.0f64, f64::max);
    let mut rep = TailReport {
        radii: radii.to_vec(),
        velocity_sup,
        charge_sup,
        ..Default::default()
    };
    for &r in radii {
        rep.velocity_frequency.push(freq(&rep.velocity_sup, r));
        rep.charge_frequency.push(freq(&rep.charge_sup, r));
        rep.velocity_bound.push(if g2 > 0.0 { (-r / (8.0 * g2)).exp() } else { 0.0 });
        rep.charge_bound.push(constants.charge_bound_c * (g16 + q16) / (r + 1.0));
    }
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    rep.monotone = order.windows(2).all(|w| {
        rep.velocity_frequency[w[1]] <= rep.velocity_frequency[w[0]]
            && rep.charge_frequency[w[1]] <= rep.charge_frequency[w[0]]
    });
    rep.below_bounds = (0..radii.len()).all(|i| {
        rep.velocity_frequency[i] <= rep.velocity_bound[i] && rep.charge_frequency[i] <= rep.charge_bound[i]
    });
    Ok(rep)
}
