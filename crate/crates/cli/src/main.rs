use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use ecspde::calibration::{calibrate, CalibrationSettings};
use ecspde::cli_io::{
    ledger_stems, read_ledger, read_state, write_json, write_ledger, write_state, IoError, RunConfig,
};
use ecspde::coupling::{run_coupling_experiment, shell_sweep, CouplingError};
use ecspde::diagnostics::{
    energy_balance_residual, log_sobolev_ledger, poincare_l4_ratio, tail_event_check, BudgetTerms, Constants,
};
use ecspde::dynamics::{integrate_with, random_state, run_ensemble, DynamicsError, InitialData, Stepper};
use ecspde::ergodicity::{compare_ensembles, stationarity_test, time_average, Observable, TimeAverageReport};
use ecspde::noise::IncrementStream;

const EXIT_CONFIG: u8 = 2;
const EXIT_BLOWUP: u8 = 3;

#[derive(Parser)]
#[command(name = "ecspde", version, about = "Stochastic electroconvection on the 2D torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one path and write its ledger and snapshots.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of steps; overrides the schedule's final time.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Integrate independent paths in parallel.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paths: Option<u64>,
    },
    /// Run the feedback coupling experiment.
    Couple {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paths: Option<u64>,
        /// Controlled modes satisfy |k|² ≤ shell.
        #[arg(long)]
        shell: Option<u32>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        budget: Option<f64>,
        /// Shells to sweep with λ = gain·√λ_(N+1), comma separated.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<u32>,
        #[arg(long, default_value_t = 2.0)]
        gain: f64,
    },
    /// Energy residuals, log-Sobolev averages, tail events and L⁴ ratios of a run directory.
    Diagnose {
        #[arg(long)]
        run: PathBuf,
        /// Tail-event radii, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 4.0, 8.0, 16.0])]
        radii: Vec<f64>,
    },
    /// Post-burn-in time averages of a run directory.
    Average {
        #[arg(long)]
        run: PathBuf,
        /// Second run directory to compare against.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Recompute the frozen constants.
    Calibrate {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "constants.json")]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ECSPDE_THREADS") {
        let n: usize = v.parse().with_context(|| format!("ECSPDE_THREADS = {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn is_blowup(e: &DynamicsError) -> bool {
    matches!(e, DynamicsError::BlowUp { .. })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(d) = cause.downcast_ref::<DynamicsError>() {
            if is_blowup(d) {
                return EXIT_BLOWUP;
            }
        }
        if let Some(CouplingError::Dynamics(d)) = cause.downcast_ref::<CouplingError>() {
            if is_blowup(d) {
                return EXIT_BLOWUP;
            }
        }
    }
    EXIT_CONFIG
}

fn load_config(common: &Common) -> Result<RunConfig, IoError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.output {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn prepare(cfg: &RunConfig) -> Result<ecspde::cli_io::RunSetup> {
    let setup = cfg.setup()?;
    std::fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    cfg.write_resolved(&cfg.output)?;
    Ok(setup)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { common, steps } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = steps {
                cfg.schedule.t_end = s as f64 * cfg.schedule.dt;
            }
            simulate(&cfg)
        }
        Command::Ensemble { common, paths } => {
            let mut cfg = load_config(&common)?;
            if let Some(p) = paths {
                cfg.ensemble.paths = p;
            }
            ensemble(&cfg)
        }
        Command::Couple {
            common,
            paths,
            shell,
            lambda,
            budget,
            sweep,
            gain,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(p) = paths {
                cfg.ensemble.paths = p;
            }
            if let Some(s) = shell {
                cfg.coupling.shell = s;
            }
            if let Some(l) = lambda {
                cfg.coupling.lambda = l;
            }
            if let Some(b) = budget {
                cfg.coupling.budget = b;
            }
            couple(&cfg, &sweep, gain)
        }
        Command::Diagnose { run, radii } => diagnose(&run, &radii),
        Command::Average { run, compare } => average(&run, compare.as_deref()),
        Command::Calibrate { samples, seed, output } => {
            let settings = CalibrationSettings {
                samples,
                seed,
                ..Default::default()
            };
            let (constants, log) = calibrate(&settings)?;
            write_json(&output, &constants)?;
            write_json(&output.with_extension("log.json"), &log)?;
            Ok(())
        }
    }
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let setup = prepare(cfg)?;
    let out = &cfg.output;
    let state0 = cfg.initial_state(&setup.grid, 0)?;
    write_state(&out.join("initial.bin"), &state0)?;
    let mut stream = IncrementStream::new(cfg.seed, 0, cfg.schedule.dt);
    let mut stepper = Stepper::new(&setup.params).with_cfl(cfg.cfl);
    let mut index = 0usize;
    let mut write_err = None;
    let traj = integrate_with(
        &state0,
        &setup.params,
        &setup.basis,
        &cfg.schedule,
        &mut stream,
        &cfg.ledger,
        &mut stepper,
        &mut |s| {
            if let Err(e) = write_state(&out.join(format!("snapshot_{index:06}.bin")), s) {
                write_err.get_or_insert(e);
            }
            index += 1;
        },
    )?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    write_ledger(out, "ledger", &traj.ledger)?;
    write_state(&out.join("final.bin"), &traj.final_state)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "steps": cfg.schedule.steps(),
            "t_end": traj.final_state.t,
            "ledger_rows": traj.ledger.rows.len(),
            "snapshots": index,
            "cfl_events": traj.cfl_events,
        }),
    )?;
    info!("simulate: {} steps written to {}", cfg.schedule.steps(), out.display());
    Ok(())
}

fn ensemble(cfg: &RunConfig) -> Result<()> {
    let setup = prepare(cfg)?;
    let out = &cfg.output;
    let first = cfg.ensemble.first_path;
    let paths = first..first + cfg.ensemble.paths;
    let initial: Vec<_> = paths
        .clone()
        .map(|p| cfg.initial_state(&setup.grid, p))
        .collect::<Result<_, _>>()?;
    let init = |p: u64| initial[(p - first) as usize].clone();
    let runs = run_ensemble(
        &setup.params,
        &setup.basis,
        &cfg.schedule,
        &cfg.ledger,
        cfg.seed,
        paths.clone(),
        &init,
        cfg.cfl,
    )?;
    let mut summary = Vec::new();
    for (p, t) in paths.zip(&runs) {
        write_ledger(out, &format!("ledger_path{p:04}"), &t.ledger)?;
        write_state(&out.join(format!("final_path{p:04}.bin")), &t.final_state)?;
        summary.push(json!({
            "path": p,
            "final_energy": t.final_state.energy(),
            "cfl_events": t.cfl_events,
        }));
    }
    write_json(&out.join("summary.json"), &summary)?;
    Ok(())
}

fn couple(cfg: &RunConfig, sweep: &[u32], gain: f64) -> Result<()> {
    let setup = prepare(cfg)?;
    let out = &cfg.output;
    let first = cfg.ensemble.first_path;
    let paths = first..first + cfg.ensemble.paths;
    let pairs: Vec<_> = paths
        .clone()
        .map(|p| -> Result<_, IoError> {
            let primary = cfg.initial_state(&setup.grid, 2 * p)?;
            let slaved = random_state(
                &setup.grid,
                &InitialData {
                    seed: cfg.initial.seed.wrapping_add(2 * p + 1),
                    ..cfg.initial.clone()
                },
            );
            Ok((primary, slaved))
        })
        .collect::<Result<_, _>>()?;
    let init = |p: u64| pairs[(p - first) as usize].clone();
    let target = cfg.ensemble.contraction_target;
    if !sweep.is_empty() {
        let s = shell_sweep(
            &setup.params,
            &setup.basis,
            &cfg.coupling,
            sweep,
            gain,
            &cfg.schedule,
            cfg.seed,
            paths,
            &init,
            target,
            0.9,
        )?;
        write_json(&out.join("shell_sweep.json"), &s)?;
        return Ok(());
    }
    let (report, ledgers) = run_coupling_experiment(
        &setup.params,
        &setup.basis,
        &cfg.coupling,
        &cfg.schedule,
        cfg.seed,
        paths.clone(),
        &init,
        target,
    )?;
    for (p, l) in paths.zip(&ledgers) {
        let mut csv = Vec::new();
        l.write_csv(&mut csv)?;
        std::fs::write(out.join(format!("coupling_path{p:04}.csv")), csv)?;
    }
    write_json(&out.join("contraction_report.json"), &report)?;
    Ok(())
}

fn run_ledgers(dir: &Path) -> Result<Vec<(String, ecspde::diagnostics::EnergyLedger)>> {
    let stems = ledger_stems(dir)?;
    if stems.is_empty() {
        return Err(IoError::Config(format!("no ledgers in {}", dir.display())).into());
    }
    stems
        .into_iter()
        .map(|s| Ok((s.clone(), read_ledger(dir, &s)?)))
        .collect()
}

fn diagnose(dir: &Path, radii: &[f64]) -> Result<()> {
    let ledgers = run_ledgers(dir)?;
    let mut per_ledger = Vec::new();
    for (stem, l) in &ledgers {
        let terms = if l.meta.sources.is_noise_free() {
            BudgetTerms::DETERMINISTIC
        } else {
            BudgetTerms::FULL
        };
        let residual = energy_balance_residual(l, terms)?;
        let sobolev = log_sobolev_ledger(l)?;
        per_ledger.push(json!({
            "ledger": stem,
            "energy_residual_max_relative": residual.max_relative,
            "log_sobolev_k": sobolev.k,
            "log_sobolev_average": sobolev.running_average.last(),
        }));
    }
    let all: Vec<_> = ledgers.iter().map(|(_, l)| l.clone()).collect();
    let tails = tail_event_check(&all, &Constants::frozen().tails, radii)?;
    let mut poincare = Vec::new();
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    files.sort();
    for f in files {
        let s = read_state(&f)?;
        if !s.q.is_zero() {
            poincare.push(json!({
                "file": f.file_name().map(|n| n.to_string_lossy().into_owned()),
                "t": s.t,
                "l4_poincare_ratio": poincare_l4_ratio(&s.q)?,
            }));
        }
    }
    write_json(
        &dir.join("diagnostics.json"),
        &json!({ "ledgers": per_ledger, "tails": tails, "snapshots": poincare }),
    )?;
    Ok(())
}

fn averages(dir: &Path, cfg: &RunConfig) -> Result<Vec<(String, TimeAverageReport)>> {
    let e = &cfg.ergodicity;
    run_ledgers(dir)?
        .into_iter()
        .map(|(s, l)| Ok((s, time_average(&l, &Observable::TRACKED, e.burn_in_fraction, e.windows)?)))
        .collect()
}

fn average(dir: &Path, compare: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(&dir.join("resolved_config.json"))?;
    let reports = averages(dir, &cfg)?;
    let per_path: Vec<_> = reports
        .iter()
        .map(|(s, r)| json!({ "ledger": s, "report": r, "stationarity": stationarity_test(r, cfg.ergodicity.stationarity_tol) }))
        .collect();
    let mut doc = json!({ "paths": per_path });
    if let Some(other) = compare {
        let b: Vec<_> = averages(other, &cfg)?.into_iter().map(|(_, r)| r).collect();
        let a: Vec<_> = reports.into_iter().map(|(_, r)| r).collect();
        let cmp: Vec<_> = Observable::TRACKED
            .iter()
            .map(|&o| compare_ensembles(&a, &b, o, cfg.ergodicity.sigmas))
            .collect::<Result<_, _>>()?;
        doc["comparison"] = json!(cmp);
    }
    write_json(&dir.join("averages.json"), &doc)?;
    Ok(())
}
