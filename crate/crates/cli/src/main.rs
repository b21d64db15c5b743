use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qlbgk::harness::{self, PhaseTiming, RunManifest};
use qlbgk::{config, Error, ScenarioKind, SimConfig};

const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_BAD_CONFIG: u8 = 3;

/// Quantum Liouville-BGK and quantum drift-diffusion solvers.
#[derive(Parser, Debug)]
#[command(name = "qlbgk", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the kinetic (QLE) solver alone.
    Qle(Common),
    /// Run the drift-diffusion (QDD) solver alone.
    Qdd(Common),
    /// Run both solvers and compare their densities.
    Compare(Common),
    /// Self-convergence study of the QLE splitting in the time step.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Comma-separated time steps.
        #[arg(long, value_delimiter = ',', default_value = "4e-4,2e-4,1e-4")]
        steps: Vec<f64>,
        /// Step of the reference solution; at most min(steps)/4.
        #[arg(long, default_value_t = 2.5e-5)]
        reference_step: f64,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario (maxwellian, hamiltonian-function, wave-packets) or preset
    /// (paper-default, wave-packets-eps0.0025).
    #[arg(long)]
    scenario: Option<String>,
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    time_step: Option<f64>,
    #[arg(long)]
    final_time: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    snapshot_stride: Option<f64>,
    #[arg(long, env = "QLBGK_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
}

impl Common {
    /// Defaults, then the preset named by `--scenario`, then the config
    /// file, then the remaining flags.
    fn resolve(&self) -> qlbgk::Result<SimConfig> {
        let named = match &self.scenario {
            Some(s) => Some(match s.parse::<ScenarioKind>() {
                Ok(kind) => SimConfig { scenario: kind, ..SimConfig::default() },
                Err(_) => config::preset(s)?,
            }),
            None => None,
        };
        let mut cfg = named.unwrap_or_default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_kv(&text)?;
        }
        if let Some(n) = named {
            cfg.scenario = n.scenario;
        }
        let set = |v: Option<f64>, slot: &mut f64| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(self.epsilon, &mut cfg.epsilon);
        set(self.beta, &mut cfg.beta);
        set(self.alpha, &mut cfg.alpha);
        set(self.time_step, &mut cfg.time_step);
        set(self.final_time, &mut cfg.final_time);
        set(self.tolerance, &mut cfg.tolerance);
        set(self.snapshot_stride, &mut cfg.snapshot_stride);
        if let Some(n) = self.grid_points {
            cfg.grid_points = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct SolverSummary {
    solver: &'static str,
    scenario: String,
    steps_completed: usize,
    final_time: f64,
    mass_drift: f64,
    failure: Option<String>,
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn timing(phase: &str, since: Instant) -> PhaseTiming {
    PhaseTiming { phase: phase.into(), seconds: since.elapsed().as_secs_f64() }
}

/// Runs the command; `Ok(false)` means a solver stopped early.
fn run(cli: Cli) -> anyhow::Result<bool> {
    let (name, common) = match &cli.command {
        Command::Qle(c) => ("qle", c),
        Command::Qdd(c) => ("qdd", c),
        Command::Compare(c) => ("compare", c),
        Command::Converge { common, .. } => ("converge", common),
    };
    let cfg = common.resolve()?;
    let dir = &common.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut manifest = RunManifest::new(name, &cfg);
    log::info!("{name}: {}", cfg.to_kv().replace('\n', "; "));

    let complete = match &cli.command {
        Command::Qle(_) | Command::Qdd(_) => {
            let t = Instant::now();
            let scenario = harness::build_scenario(&cfg)?;
            manifest.timings.push(timing("setup", t));
            let t = Instant::now();
            let (snaps, steps, final_time, failure) = if name == "qle" {
                let r = harness::run_qle(&cfg, &scenario)?;
                (r.snapshots, r.steps_completed, r.final_time, r.failure)
            } else {
                let r = harness::run_qdd(&cfg, &scenario)?;
                (r.snapshots, r.steps_completed, r.final_time, r.failure)
            };
            manifest.timings.push(timing(name, t));
            let summary = SolverSummary {
                solver: if name == "qle" { "qle" } else { "qdd" },
                scenario: cfg.scenario.to_string(),
                steps_completed: steps,
                final_time,
                mass_drift: harness::mass_drift(&snaps),
                failure: failure.as_ref().map(ToString::to_string),
            };
            manifest.files.push(harness::write_trajectory(name, &snaps, dir)?);
            let file = format!("{name}_summary.json");
            write_json(&dir.join(&file), &summary)?;
            manifest.files.push(file);
            println!("{name} {}: {steps} steps to t = {final_time}, mass drift {:.3e}", cfg.scenario, summary.mass_drift);
            if let Some(e) = &failure {
                eprintln!("error: {e}");
            }
            failure.is_none()
        }
        Command::Compare(_) => {
            let c = harness::run_comparison(&cfg)?;
            manifest.timings.extend(c.timings.iter().cloned());
            manifest.files.extend(harness::write_comparison(&c, dir)?);
            let r = &c.report;
            println!(
                "compare {} eps = {}: space-time error {:.4e} over {} snapshots; mass drift qle {:.2e}, qdd {:.2e}",
                r.scenario,
                r.epsilon,
                r.error,
                r.snapshot_times.len(),
                r.qle_mass_drift,
                r.qdd_mass_drift
            );
            for e in r.qle_failure.iter().chain(&r.qdd_failure) {
                eprintln!("error: {e}");
            }
            r.is_complete()
        }
        Command::Converge { steps, reference_step, .. } => {
            let t = Instant::now();
            let study = harness::run_convergence_study(&cfg, steps, *reference_step)?;
            manifest.timings.push(timing("converge", t));
            let mut csv = String::from("h,error,order\n");
            for r in &study.rows {
                csv += &format!("{},{},{}\n", r.h, r.error, r.order.map_or(String::new(), |o| o.to_string()));
                println!("h = {:<10} error = {:.4e}  order = {}", r.h, r.error, r.order.map_or("-".into(), |o| format!("{o:.3}")));
            }
            std::fs::write(dir.join("convergence.csv"), csv)?;
            write_json(&dir.join("convergence.json"), &study)?;
            manifest.files.extend(["convergence.csv".to_string(), "convergence.json".to_string()]);
            println!("fitted order {:.3}{}", study.fitted_order, if study.monotone { "" } else { " (errors not monotone)" });
            true
        }
    };
    manifest.write(dir)?;
    Ok(complete)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_convergence_failure() => EXIT_NOT_CONVERGED,
        Some(Error::Config(_) | Error::UnknownPreset(_) | Error::InvalidGrid(_)) => EXIT_BAD_CONFIG,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors share the bad-configuration code; help and version exit 0
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_BAD_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
