//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use ecspde::calibration::MomentRegime;
use ecspde::coupling::{next_eigenvalue, run_coupling_experiment, shell_sweep, CouplingConfig};
use ecspde::diagnostics::{
    continuity_bound_check, energy_balance_residual, poincare_l4_ratio, BudgetTerms, Constants, FieldSampler,
    LedgerSettings,
};
use ecspde::dynamics::{
    integrate, integrate_with, random_state, run_ensemble, CflPolicy, ForcingSpec, InitialData, ModelParams,
    StepSchedule, Stepper, SystemState,
};
use ecspde::ergodicity::{compare_ensembles, mean_se, moment_bound_suite, time_average, MomentConstants, Observable};
use ecspde::noise::{IncrementStream, NoiseBand, NoiseBasis, NoiseConfig, StochasticConvolution};
use ecspde::spectral::{
    apply_lambda, divergence, gradient, leray_project, riesz, FourierGrid, ScalarField, VectorField,
};
use rustfft::num_complex::Complex64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn band_noise(max_shell: u32, sigma: f64, alpha: f64) -> NoiseConfig {
    let band = NoiseBand { max_shell, sigma, alpha };
    NoiseConfig { charge: Some(band.clone()), velocity: Some(band), modes: vec![] }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Samples of `h(k·x)` on the grid, layout `i1 * n + i2`.
fn sampled(n: usize, k: (i64, i64), scale: f64, h: fn(f64) -> f64) -> Vec<f64> {
    let dx = 2.0 * PI / n as f64;
    let mut v = Vec::with_capacity(n * n);
    for i1 in 0..n {
        for i2 in 0..n {
            let phase = (k.0 * i1 as i64 + k.1 * i2 as i64).rem_euclid(n as i64);
            v.push(scale * h(phase as f64 * dx));
        }
    }
    v
}

fn operator_exactness() -> Outcome {
    let n = 32;
    let g = FourierGrid::new(n).unwrap();
    let mut worst: f64 = 0.0;
    for k in [(1, 0), (0, 1), (2, 3), (-3, 5), (7, -4), (10, 10), (0, 15)] {
        let ka = ((k.0 * k.0 + k.1 * k.1) as f64).sqrt();
        let c = ScalarField::cos_mode(&g, k.0, k.1, 1.0).unwrap();
        let s = ScalarField::sin_mode(&g, k.0, k.1, 1.0).unwrap();
        for p in [-1.0, -0.5, 0.5, 1.0, 2.0] {
            let got = apply_lambda(&c, p).unwrap().to_physical();
            worst = worst.max(max_abs_diff(&got, &sampled(n, k, ka.powf(p), f64::cos)));
        }
        let r = riesz(&c).unwrap();
        worst = worst.max(max_abs_diff(&r.x.to_physical(), &sampled(n, k, -k.0 as f64 / ka, f64::sin)));
        worst = worst.max(max_abs_diff(&r.y.to_physical(), &sampled(n, k, -k.1 as f64 / ka, f64::sin)));
        let gr = gradient(&c);
        worst = worst.max(max_abs_diff(&gr.x.to_physical(), &sampled(n, k, -k.0 as f64, f64::sin)));
        worst = worst.max(max_abs_diff(&gr.y.to_physical(), &sampled(n, k, -k.1 as f64, f64::sin)));
        let (b1, b2) = (0.3, -1.7);
        let v = VectorField { x: &s * b1, y: &s * b2 };
        let kb = k.0 as f64 * b1 + k.1 as f64 * b2;
        worst = worst.max(max_abs_diff(&divergence(&v).to_physical(), &sampled(n, k, kb, f64::cos)));
        let w = VectorField { x: &c * b1, y: &c * b2 };
        let p = leray_project(&w);
        let a = kb / (ka * ka);
        worst = worst.max(max_abs_diff(&p.x.to_physical(), &sampled(n, k, b1 - a * k.0 as f64, f64::cos)));
        worst = worst.max(max_abs_diff(&p.y.to_physical(), &sampled(n, k, b2 - a * k.1 as f64, f64::cos)));
    }
    outcome(worst < 1e-12, format!("max abs error {worst:.2e} (< 1e-12)"))
}

fn riesz_and_leray_identities() -> Outcome {
    let g = FourierGrid::new(32).unwrap();
    let mut sampler = FieldSampler::new(&g, 11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let f = sampler.charge();
        let r = riesz(&f).unwrap();
        let sum = &(&riesz(&r.x).unwrap().x + &riesz(&r.y).unwrap().y) + &f;
        worst = worst.max(sum.max_abs_coeff() / f.max_abs_coeff());
        let v = VectorField { x: sampler.charge(), y: sampler.charge() };
        let p = leray_project(&v);
        let pp = leray_project(&p);
        let d = (&pp.x - &p.x).max_abs_coeff().max((&pp.y - &p.y).max_abs_coeff());
        worst = worst.max(d / v.x.max_abs_coeff().max(v.y.max_abs_coeff()));
    }
    outcome(worst < 1e-11, format!("max relative error {worst:.2e} (< 1e-11)"))
}

fn deterministic_energy_identity() -> Outcome {
    let g = FourierGrid::new(64).unwrap();
    let init = random_state(&g, &InitialData { charge_l2: 1.0, velocity_l2: 1.0, seed: 5, ..Default::default() });
    let params = ModelParams::zero(&g);
    let basis = NoiseBasis::empty(&g);
    let residual = |dt: f64| {
        let t = integrate(&init, &params, &basis, &StepSchedule::new(dt, 1.0), &mut IncrementStream::new(0, 0, dt)).unwrap();
        energy_balance_residual(&t.ledger, BudgetTerms::DETERMINISTIC).unwrap().max_relative
    };
    let (r1, r2) = (residual(1e-3), residual(5e-4));
    let ratio = r1 / r2;
    outcome(
        r1 < 1e-4 && ratio >= 1.8,
        format!("relative residual {r1:.2e} (< 1e-4), halving dt reduces it {ratio:.2}x (>= 1.8)"),
    )
}

fn ito_budget() -> Outcome {
    let g = FourierGrid::new(32).unwrap();
    let params = ModelParams::zero(&g);
    let basis = NoiseBasis::build(&g, &band_noise(4, 0.1, 1.0)).unwrap();
    let dt = 1e-3;
    let init = |p: u64| random_state(&g, &InitialData { charge_l2: 1.0, velocity_l2: 1.0, seed: 100 + p, ..Default::default() });
    let schedule = StepSchedule::new(dt, 2.0).with_ledger_stride(100);
    let runs = run_ensemble(&params, &basis, &schedule, &LedgerSettings::default(), 21, 0..256, &init, CflPolicy::Substep).unwrap();
    let end = |terms| -> Vec<f64> {
        runs.iter()
            .map(|t| *energy_balance_residual(&t.ledger, terms).unwrap().residual.last().unwrap())
            .collect()
    };
    let with_ito = BudgetTerms { ito: true, martingale: false };
    let without = BudgetTerms { ito: false, martingale: false };
    let (m, se) = mean_se(&end(with_ito));
    let (m0, se0) = mean_se(&end(without));
    let (z, z0) = (m.abs() / se, m0.abs() / se0);
    outcome(
        z <= 3.0 && z0 > 5.0,
        format!("mean residual {m:.3e} ± {se:.1e} ({z:.2} SE <= 3); without Ito term {z0:.1} SE (> 5)"),
    )
}

fn l4_poincare() -> Outcome {
    let g = FourierGrid::new(32).unwrap();
    let mut sampler = FieldSampler::new(&g, 12);
    let min = (0..1000).map(|_| poincare_l4_ratio(&sampler.charge()).unwrap()).fold(f64::INFINITY, f64::min);
    let mut worst: f64 = 0.0;
    let mut seed = 0.3f64;
    for shell in [1i64, 2, 5, 25, 50, 65] {
        let mut f = ScalarField::zeros(&g);
        for a in -9i64..=9 {
            for b in 0i64..=9 {
                if a * a + b * b == shell && (b > 0 || a > 0) {
                    seed = (seed * 9301.0 + 0.49297).fract();
                    f.set_mode(a, b, Complex64::new(seed - 0.5, 0.7 * seed)).unwrap();
                }
            }
        }
        let r = poincare_l4_ratio(&f).unwrap();
        worst = worst.max((r - (shell as f64).sqrt()).abs());
    }
    outcome(
        min > 0.0 && worst <= 1e-10,
        format!("min ratio {min:.4} over 1000 fields (> 0); single-shell error {worst:.1e} (<= 1e-10)"),
    )
}

fn continuity_bound() -> Outcome {
    let g = FourierGrid::new(32).unwrap();
    let c0 = Constants::frozen().c0;
    let (params, basis) = MomentRegime { sigma: 1.0, forcing: 1.0, initial: 1.0 }.setup(&g).unwrap();
    let dt = 0.005;
    let schedule = StepSchedule::new(dt, 1.0).with_snapshot_stride(1);
    let results: Vec<(bool, f64)> = (0..16u64)
        .map(|p| {
            let a = random_state(&g, &InitialData { charge_l2: 1.0, velocity_l2: 1.0, seed: 300 + p, ..Default::default() });
            let d = random_state(&g, &InitialData { charge_l2: 1.0, velocity_l2: 1.0, seed: 900 + p, ..Default::default() });
            let b = SystemState { q: &a.q + &(&d.q * 1e-6), u: &a.u + &(&d.u * 1e-6), t: 0.0 };
            let run = |s: &SystemState| {
                let mut snaps = Vec::new();
                let t = integrate_with(
                    s,
                    &params,
                    &basis,
                    &schedule,
                    &mut IncrementStream::new(31, p, dt),
                    &LedgerSettings::default(),
                    &mut Stepper::new(&params).with_cfl(CflPolicy::Substep),
                    &mut |x| snaps.push(x.clone()),
                )
                .unwrap();
                (t, snaps)
            };
            let (ta, sa) = run(&a);
            let (_, sb) = run(&b);
            let int_rcond: Vec<f64> = ta.ledger.rows.iter().map(|r| r.int_rcond).collect();
            let rep = continuity_bound_check(&sa, &sb, &int_rcond, c0).unwrap();
            let later = rep.rows[1..].iter().map(|r| r.distance_sq / r.bound).fold(0.0, f64::max);
            (rep.holds, later)
        })
        .collect();
    let held = results.iter().filter(|r| r.0).count();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(held == 16, format!("{held}/16 paths within the bound at every row, max ratio after t = 0 {worst:.4} (C0 = {c0:.3e})"))
}

fn moment_suite() -> Outcome {
    let g = FourierGrid::new(32).unwrap();
    let regime = MomentRegime { sigma: 1.0, forcing: 1.0, initial: 1.0 };
    let (params, basis) = regime.setup(&g).unwrap();
    let schedule = StepSchedule::new(0.01, 25.0).with_ledger_stride(10);
    let init = |p: u64| random_state(&g, &regime.initial_data(50_000 + p));
    let runs = run_ensemble(&params, &basis, &schedule, &LedgerSettings::default(), 41, 0..128, &init, CflPolicy::Substep).unwrap();
    let ledgers: Vec<_> = runs.into_iter().map(|t| t.ledger).collect();
    let c = Constants::frozen();
    let constants = MomentConstants { c4: c.moment_l4_c4, c12: c.moment_l4_c12, grad_velocity: c.moment_grad_u_c };
    let rep = moment_bound_suite(&ledgers, &constants, &[1.0, 5.0, 25.0]).unwrap();
    let min_r2 = rep.fits.iter().map(|f| f.r_squared).fold(1.0, f64::min);
    let failing: Vec<String> = rep.checks.iter().filter(|c| !c.holds).map(|c| format!("{}@{}", c.bound, c.t)).collect();
    let tight = rep.checks.iter().map(|c| c.lhs_mean / c.rhs).fold(0.0, f64::max);
    outcome(
        rep.all_hold && min_r2 > 0.95,
        format!(
            "{}/{} checks hold (max lhs/rhs {tight:.3}){}; min affine R² {min_r2:.4} (> 0.95)",
            rep.checks.len() - failing.len(),
            rep.checks.len(),
            if failing.is_empty() { String::new() } else { format!(", failing {failing:?}") }
        ),
    )
}

fn stationarity_signature() -> Outcome {
    let g = FourierGrid::new(32).unwrap();
    let regime = MomentRegime { sigma: 1.0, forcing: 1.0, initial: 0.0 };
    let (params, basis) = regime.setup(&g).unwrap();
    let schedule = StepSchedule::new(0.01, 20.0).with_ledger_stride(5);
    let ensemble = |l2: f64, seed: u64| {
        let init = |p: u64| random_state(&g, &InitialData { charge_l2: l2, velocity_l2: l2, seed: seed + p, ..Default::default() });
        let runs = run_ensemble(&params, &basis, &schedule, &LedgerSettings::default(), seed, 0..64, &init, CflPolicy::Substep).unwrap();
        runs.iter()
            .map(|t| time_average(&t.ledger, &Observable::TRACKED, 0.25, 8).unwrap())
            .collect::<Vec<_>>()
    };
    let a = ensemble(0.2, 61);
    let b = ensemble(3.0, 62);
    let mut pass = true;
    let mut detail = Vec::new();
    for obs in [Observable::QL4Pow4, Observable::GradUSq] {
        let c = compare_ensembles(&a, &b, obs, 2.0).unwrap();
        pass &= c.agree;
        detail.push(format!("{} {:.4}/{:.4} z = {:.2}", c.observable, c.mean_a, c.mean_b, c.z));
    }
    outcome(pass, format!("{} (<= 2 combined SE)", detail.join("; ")))
}

fn coupling_contraction() -> Outcome {
    let g = FourierGrid::new(32).unwrap();
    let params = ForcingSpec { kolmogorov: Some((300.0, 4)), potential: None }.build(&g, 0.0).unwrap();
    let basis = NoiseBasis::build(&g, &band_noise(16, 1.0, 1.0)).unwrap();
    let schedule = StepSchedule::new(0.01, 10.0).with_ledger_stride(10);
    let init = |p: u64| {
        let d = |seed| InitialData { charge_l2: 1.0, velocity_l2: 1.0, seed, ..Default::default() };
        (random_state(&g, &d(7000 + 2 * p)), random_state(&g, &d(7001 + 2 * p)))
    };
    let shell = 16;
    let lambda_next = next_eigenvalue(shell) as f64;
    let base = CouplingConfig { shell, lambda: 2.0 * lambda_next.sqrt(), budget: 1e8, radius: 1.0, strict: true };
    let sweep = shell_sweep(&params, &basis, &base, &[1, 2, 4, 8, 16], 2.0, &schedule, 71, 0..8, &init, 1e-3, 0.9).unwrap();
    let (on, _) = run_coupling_experiment(&params, &basis, &base, &schedule, 71, 0..32, &init, 1e-3).unwrap();
    let off_cfg = CouplingConfig { lambda: 0.0, strict: false, ..base };
    let (off, _) = run_coupling_experiment(&params, &basis, &off_cfg, &schedule, 71, 0..32, &init, 1e-3).unwrap();
    let gain = on.median_decay_rate - off.median_decay_rate;
    let margin = lambda_next.powf(0.25);
    let threshold_ok = sweep.threshold.is_some_and(|t| t <= shell);
    outcome(
        on.fraction_contracted >= 0.9 && gain >= margin && threshold_ok,
        format!(
            "contracted {:.0}% (>= 90%); median rate {:.3} vs {:.3} without feedback, gain {gain:.3} (>= {margin:.3}); sweep threshold shell {:?} (<= {shell})",
            100.0 * on.fraction_contracted,
            on.median_decay_rate,
            off.median_decay_rate,
            sweep.threshold
        ),
    )
}

fn pathwise_decomposition() -> Outcome {
    let g = FourierGrid::new(32).unwrap();
    let (params, basis) = MomentRegime { sigma: 1.0, forcing: 1.0, initial: 1.0 }.setup(&g).unwrap();
    let init = random_state(&g, &InitialData { charge_l2: 1.0, velocity_l2: 1.0, seed: 77, ..Default::default() });
    let fine = 5e-4;
    let difference = |substeps: u32| {
        let dt = fine * substeps as f64;
        let steps = (0.5 / dt).round() as u64;
        let mut stream = IncrementStream::coarsened(81, 0, fine, substeps);
        let mut stepper = Stepper::new(&params);
        let mut direct = init.clone();
        let mut shifted = init.clone();
        let mut sc = StochasticConvolution::new(&g);
        for i in 1..=steps {
            let inc = stream.sample_increments(basis.len());
            direct = stepper.step(&direct, &basis, &inc, dt).unwrap();
            shifted = stepper.step_pathwise(&shifted, &mut sc, &basis, &inc, dt).unwrap();
            direct.t = i as f64 * dt;
            shifted.t = direct.t;
            sc.t = direct.t;
        }
        let rebuilt = ecspde::dynamics::reconstruct(&shifted, &sc);
        let diff = direct.difference(&rebuilt);
        ((diff.q.l2_norm_sq() + diff.u.l2_norm_sq()) / (direct.q.l2_norm_sq() + direct.u.l2_norm_sq())).sqrt()
    };
    let (d1, d2) = (difference(2), difference(1));
    let ratio = d1 / d2;
    outcome(
        d1 < 1e-2 && ratio >= 1.8,
        format!("relative L2 difference {d1:.2e} at dt = 1e-3 (< 1e-2), {d2:.2e} at dt = 5e-4, ratio {ratio:.2} (>= 1.8)"),
    )
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |id: &str, name: &str| {
        filter.is_empty()
            || filter.iter().any(|f| if f.parse::<usize>().is_ok() { f == id } else { name.contains(f.as_str()) })
    };
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("operator exactness", operator_exactness),
        ("Riesz and Leray identities", riesz_and_leray_identities),
        ("deterministic energy identity", deterministic_energy_identity),
        ("stochastic Ito budget", ito_budget),
        ("nonlinear L4 Poincare", l4_poincare),
        ("pathwise continuity bound", continuity_bound),
        ("moment-bound suite", moment_suite),
        ("stationarity signature", stationarity_signature),
        ("coupling contraction", coupling_contraction),
        ("pathwise decomposition", pathwise_decomposition),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !selected(&id, name) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status} {name}: {} [{:.1} s]", o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
