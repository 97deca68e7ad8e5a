//! Time averages, stationarity checks and moment bounds for the
//! zero-potential system.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{EnergyLedger, LedgerRow};
use crate::dynamics::SystemState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ErgodicityError {
    #[error("no ledger rows after burn-in at t = {0}")]
    EmptyWindow(f64),
    #[error("burn-in fraction {0} must lie in [0, 1)")]
    InvalidBurnIn(f64),
    #[error("need at least two windows, got {0}")]
    InvalidWindows(usize),
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("ergodicity features require a zero potential")]
    NonZeroPotential,
}

/// Scalar functionals of a ledger row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    One,
    QL2Sq,
    QL4Pow4,
    QHHalfSq,
    GradUSq,
    LapUSq,
    Energy,
    LogSobolev,
}

impl Observable {
    pub const TRACKED: [Observable; 6] = [
        Observable::QL2Sq,
        Observable::QL4Pow4,
        Observable::QHHalfSq,
        Observable::GradUSq,
        Observable::LapUSq,
        Observable::LogSobolev,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Observable::One => "one",
            Observable::QL2Sq => "q_l2_sq",
            Observable::QL4Pow4 => "q_l4_pow4",
            Observable::QHHalfSq => "q_h_half_sq",
            Observable::GradUSq => "grad_u_sq",
            Observable::LapUSq => "lap_u_sq",
            Observable::Energy => "energy",
            Observable::LogSobolev => "log_sobolev",
        }
    }

    pub fn value(&self, r: &LedgerRow) -> f64 {
        match self {
            Observable::One => 1.0,
            Observable::QL2Sq => r.q_l2 * r.q_l2,
            Observable::QL4Pow4 => r.q_l4.powi(4),
            Observable::QHHalfSq => r.q_h_half * r.q_h_half,
            Observable::GradUSq => r.u_grad * r.u_grad,
            Observable::LapUSq => r.u_lap * r.u_lap,
            Observable::Energy => r.energy,
            Observable::LogSobolev => r.log_sobolev,
        }
    }
}

/// Real and imaginary parts of `q̂` at `(1,0), (0,1), (1,1), (1,−1)`.
pub fn low_mode_coefficients(state: &SystemState) -> [f64; 8] {
    let mut out = [0.0; 8];
    for (i, (a, b)) in [(1, 0), (0, 1), (1, 1), (1, -1)].into_iter().enumerate() {
        let c = state.q.coeff(a, b);
        out[2 * i] = c.re;
        out[2 * i + 1] = c.im;
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableAverage {
    pub observable: String,
    /// Trapezoid average over `(burn-in, T]`.
    pub mean: f64,
    pub window_means: Vec<f64>,
    /// Batch-means standard error of `mean`.
    pub standard_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeAverageReport {
    pub burn_in: f64,
    pub burn_in_index: usize,
    pub t_end: f64,
    pub averages: Vec<ObservableAverage>,
}

impl TimeAverageReport {
    pub fn get(&self, obs: Observable) -> Option<&ObservableAverage> {
        self.averages.iter().find(|a| a.observable == obs.name())
    }
}

/// Default burn-in as a fraction of `T`.
pub const DEFAULT_BURN_IN: f64 = 0.25;
pub const DEFAULT_WINDOWS: usize = 8;

fn trapezoid_mean(t: &[f64], v: &[f64]) -> f64 {
    if t.len() == 1 {
        return v[0];
    }
    let mut acc = 0.0;
    for i in 1..t.len() {
        acc += 0.5 * (t[i] - t[i - 1]) * (v[i] + v[i - 1]);
    }
    acc / (t[t.len() - 1] - t[0])
}

/// Mean and standard error of the mean.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Trapezoid time averages over `[burn_in_fraction·T, T]`, split into
/// `windows` equal windows for batch standard errors.
pub fn time_average(
    ledger: &EnergyLedger,
    observables: &[Observable],
    burn_in_fraction: f64,
    windows: usize,
) -> Result<TimeAverageReport, ErgodicityError> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(ErgodicityError::InvalidBurnIn(burn_in_fraction));
    }
    if windows < 2 {
        return Err(ErgodicityError::InvalidWindows(windows));
    }
    let first = ledger.rows.first().ok_or(ErgodicityError::EmptyWindow(0.0))?;
    let t_end = ledger.rows.last().map(|r| r.t).unwrap_or(first.t);
    let burn_in = first.t + burn_in_fraction * (t_end - first.t);
    let start = ledger.rows.iter().position(|r| r.t >= burn_in - 1e-12).unwrap_or(ledger.rows.len());
    let rows = &ledger.rows[start..];
    if rows.len() < windows + 1 {
        return Err(ErgodicityError::EmptyWindow(burn_in));
    }
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    // window boundaries on row indices so that adjacent windows share an endpoint
    let bounds: Vec<usize> = (0..=windows).map(|w| w * (rows.len() - 1) / windows).collect();
    let averages = observables
        .iter()
        .map(|obs| {
            let v: Vec<f64> = rows.iter().map(|r| obs.value(r)).collect();
            let window_means: Vec<f64> = bounds
                .windows(2)
                .map(|b| trapezoid_mean(&t[b[0]..=b[1]], &v[b[0]..=b[1]]))
                .collect();
            let (_, se) = mean_se(&window_means);
            ObservableAverage {
                observable: obs.name().to_string(),
                mean: trapezoid_mean(&t, &v),
                window_means,
                standard_error: se,
            }
        })
        .collect();
    Ok(TimeAverageReport {
        burn_in,
        burn_in_index: start,
        t_end,
        averages,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StationarityEntry {
    pub observable: String,
    pub first_half: f64,
    pub second_half: f64,
    pub first_se: f64,
    pub second_se: f64,
    pub stationary: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StationarityVerdict {
    pub rel_tol: f64,
    pub entries: Vec<StationarityEntry>,
    pub stationary: bool,
}

/// Compares first-half and second-half window means: each observable must
/// agree to `rel_tol` and its two standard-error intervals must overlap.
pub fn stationarity_test(report: &TimeAverageReport, rel_tol: f64) -> StationarityVerdict {
    let entries: Vec<StationarityEntry> = report
        .averages
        .iter()
        .map(|a| {
            let h = a.window_means.len() / 2;
            let (m1, s1) = mean_se(&a.window_means[..h]);
            let (m2, s2) = mean_se(&a.window_means[h..]);
            let diff = (m1 - m2).abs();
            let scale = m1.abs().max(m2.abs());
            StationarityEntry {
                observable: a.observable.clone(),
                first_half: m1,
                second_half: m2,
                first_se: s1,
                second_se: s2,
                stationary: diff <= rel_tol * scale && diff <= s1 + s2 + 1e-12 * scale,
            }
        })
        .collect();
    StationarityVerdict {
        rel_tol,
        stationary: entries.iter().all(|e| e.stationary),
        entries,
    }
}

/// Ensemble comparison of one observable's post-burn-in means.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleComparison {
    pub observable: String,
    pub mean_a: f64,
    pub se_a: f64,
    pub mean_b: f64,
    pub se_b: f64,
    /// `|mean_a − mean_b| / √(se_a² + se_b²)`
    pub z: f64,
    pub agree: bool,
}

/// Agreement of per-path time averages between two ensembles within
/// `sigmas` combined standard errors.
pub fn compare_ensembles(
    a: &[TimeAverageReport],
    b: &[TimeAverageReport],
    obs: Observable,
    sigmas: f64,
) -> Result<EnsembleComparison, ErgodicityError> {
    let pick = |e: &[TimeAverageReport]| -> Result<Vec<f64>, ErgodicityError> {
        if e.is_empty() {
            return Err(ErgodicityError::EmptyEnsemble);
        }
        Ok(e.iter().filter_map(|r| r.get(obs).map(|x| x.mean)).collect())
    };
    let (ma, sa) = mean_se(&pick(a)?);
    let (mb, sb) = mean_se(&pick(b)?);
    let comb = (sa * sa + sb * sb).sqrt();
    let z = if comb > 0.0 { (ma - mb).abs() / comb } else if ma == mb { 0.0 } else { f64::INFINITY };
    Ok(EnsembleComparison {
        observable: obs.name().to_string(),
        mean_a: ma,
        se_a: sa,
        mean_b: mb,
        se_b: sb,
        z,
        agree: z <= sigmas,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS statistics of the low-mode marginals between two sample sets.
pub fn low_mode_ks(a: &[SystemState], b: &[SystemState]) -> [f64; 8] {
    let ca: Vec<[f64; 8]> = a.iter().map(low_mode_coefficients).collect();
    let cb: Vec<[f64; 8]> = b.iter().map(low_mode_coefficients).collect();
    let mut out = [0.0; 8];
    for (m, o) in out.iter_mut().enumerate() {
        let xa: Vec<f64> = ca.iter().map(|c| c[m]).collect();
        let xb: Vec<f64> = cb.iter().map(|c| c[m]).collect();
        *o = ks_statistic(&xa, &xb);
    }
    out
}

/// The moment bounds checked by [`moment_bound_suite`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentBound {
    /// `E∫(‖q‖² + ‖∇u‖²) ≤ ‖Λ^{-1/2}q₀‖² + ‖u₀‖² + (‖Λ^{-1/2}g̃‖² + ‖g‖² + ‖f‖²)t`
    Energy,
    /// `E∫‖Λ^{1/2}q‖² ≤ ‖q₀‖² + ‖g̃‖²t`
    ChargeHalf,
    /// `E∫‖q‖⁴_{L⁴} ≤ C(4)(‖q₀‖⁴_{L⁴} + ‖g̃‖⁴_{L⁴}t)`
    ChargeL4,
    /// `E∫‖q‖¹²_{L⁴} ≤ C(12)(‖q₀‖¹²_{L⁴} + ‖g̃‖¹²_{L⁴}t)`
    ChargeL12,
    /// `E‖∇u‖² + E∫‖Δu‖² ≤ C(‖q₀‖⁴_{L⁴} + ‖∇u₀‖² + (‖f‖² + ‖∇g‖² + ‖g̃‖⁴_{L⁴})t)`
    GradVelocity,
}

impl MomentBound {
    pub const ALL: [MomentBound; 5] = [
        MomentBound::Energy,
        MomentBound::ChargeHalf,
        MomentBound::ChargeL4,
        MomentBound::ChargeL12,
        MomentBound::GradVelocity,
    ];

    /// Left-hand side along one ledger at row `r`.
    pub fn lhs(&self, r: &LedgerRow) -> f64 {
        match self {
            MomentBound::Energy => r.int_q_l2_sq + r.int_grad_u_sq,
            MomentBound::ChargeHalf => r.int_q_h_half_sq,
            MomentBound::ChargeL4 => r.int_q_l4_pow4,
            MomentBound::ChargeL12 => r.int_q_l4_pow12,
            MomentBound::GradVelocity => r.u_grad * r.u_grad + r.int_lap_u_sq,
        }
    }

    /// Right-hand side without its constant, from the initial row and `t`.
    pub fn rhs_base(&self, ledger: &EnergyLedger, t: f64) -> f64 {
        let r0 = &ledger.rows[0];
        let s = &ledger.meta.sources;
        let g4 = s.charge_noise_l4_pow4;
        match self {
            MomentBound::Energy => {
                r0.energy + (s.charge_noise_h_minus_half_sq + s.velocity_noise_l2_sq + s.forcing_l2_sq) * t
            }
            MomentBound::ChargeHalf => r0.q_l2 * r0.q_l2 + s.charge_noise_l2_sq * t,
            MomentBound::ChargeL4 => r0.q_l4.powi(4) + g4 * t,
            MomentBound::ChargeL12 => r0.q_l4.powi(12) + g4.powi(3) * t,
            MomentBound::GradVelocity => {
                r0.q_l4.powi(4) + r0.u_grad * r0.u_grad + (s.forcing_l2_sq + s.velocity_noise_grad_sq + g4) * t
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MomentBound::Energy => "energy",
            MomentBound::ChargeHalf => "charge_half",
            MomentBound::ChargeL4 => "charge_l4",
            MomentBound::ChargeL12 => "charge_l12",
            MomentBound::GradVelocity => "grad_velocity",
        }
    }
}

/// Constants of the moment bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentConstants {
    pub c4: f64,
    pub c12: f64,
    pub grad_velocity: f64,
}

impl MomentConstants {
    pub fn of(&self, b: MomentBound) -> f64 {
        match b {
            MomentBound::Energy | MomentBound::ChargeHalf => 1.0,
            MomentBound::ChargeL4 => self.c4,
            MomentBound::ChargeL12 => self.c12,
            MomentBound::GradVelocity => self.grad_velocity,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub bound: String,
    pub t: f64,
    pub lhs_mean: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    /// `lhs_mean ≤ rhs + 3·lhs_se`
    pub holds: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub bound: String,
    pub intercept: f64,
    /// Fitted growth rate `Γ₂`.
    pub slope: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub checks: Vec<MomentCheck>,
    pub fits: Vec<AffineFit>,
    pub all_hold: bool,
}

/// Least-squares line through `(x, y)` with its coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (intercept, slope, r2)
}

fn ensemble_series(ledgers: &[EnergyLedger], f: impl Fn(&EnergyLedger, usize) -> f64) -> Vec<(f64, f64)> {
    let rows = ledgers.iter().map(|l| l.rows.len()).min().unwrap_or(0);
    (0..rows)
        .map(|i| {
            let v: Vec<f64> = ledgers.iter().map(|l| f(l, i)).collect();
            mean_se(&v)
        })
        .collect()
}

/// Checks every bound at the ledger rows nearest `times` and fits the
/// ensemble-mean accumulated integrals against `t`.
pub fn moment_bound_suite(
    ledgers: &[EnergyLedger],
    constants: &MomentConstants,
    times: &[f64],
) -> Result<MomentReport, ErgodicityError> {
    let first = ledgers.first().ok_or(ErgodicityError::EmptyEnsemble)?;
    if ledgers.iter().any(|l| l.rows.is_empty()) {
        return Err(ErgodicityError::EmptyWindow(0.0));
    }
    let t: Vec<f64> = first.rows.iter().map(|r| r.t - first.rows[0].t).collect();
    let mut rep = MomentReport::default();
    for b in MomentBound::ALL {
        let lhs = ensemble_series(ledgers, |l, i| b.lhs(&l.rows[i]));
        let rhs = ensemble_series(ledgers, |l, i| b.rhs_base(l, l.rows[i].t - l.rows[0].t));
        for &tt in times {
            let i = t
                .iter()
                .enumerate()
                .take(lhs.len())
                .min_by(|a, c| (a.1 - tt).abs().total_cmp(&(c.1 - tt).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let bound = constants.of(b) * rhs[i].0;
            rep.checks.push(MomentCheck {
                bound: b.name().into(),
                t: t[i],
                lhs_mean: lhs[i].0,
                lhs_se: lhs[i].1,
                rhs: bound,
                holds: lhs[i].0 <= bound + 3.0 * lhs[i].1,
            });
        }
        let y: Vec<f64> = lhs.iter().map(|p| p.0).collect();
        let (intercept, slope, r_squared) = linear_fit(&t[..y.len()], &y);
        rep.fits.push(AffineFit {
            bound: b.name().into(),
            intercept,
            slope,
            r_squared,
        });
    }
    rep.all_hold = rep.checks.iter().all(|c| c.holds);
    Ok(rep)
}

/// Smallest constants making every ensemble-mean row satisfy the bounds.
pub fn required_moment_constants(ledgers: &[EnergyLedger]) -> Result<MomentConstants, ErgodicityError> {
    if ledgers.is_empty() {
        return Err(ErgodicityError::EmptyEnsemble);
    }
    let need = |b: MomentBound| {
        let lhs = ensemble_series(ledgers, |l, i| b.lhs(&l.rows[i]));
        let rhs = ensemble_series(ledgers, |l, i| b.rhs_base(l, l.rows[i].t - l.rows[0].t));
        lhs.iter()
            .zip(&rhs)
            .filter(|(_, r)| r.0 > 0.0)
            .map(|(l, r)| l.0 / r.0)
            .fold(0.0f64, f64::max)
    };
    Ok(MomentConstants {
        c4: need(MomentBound::ChargeL4),
        c12: need(MomentBound::ChargeL12),
        grad_velocity: need(MomentBound::GradVelocity),
    })
}
