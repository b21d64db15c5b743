//! Running the test cases end to end: QLE against QDD comparisons,
//! self-convergence studies, and the files they leave behind.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::qdd::{QddSolver, QddState};
use crate::qle::QleSolver;
use crate::scenarios::Scenario;
use crate::state::DensityOperator;
use crate::trajectory::{step_count, Run, Snapshot};

type Snap = Snapshot<f64>;

fn check_aligned(a: &[Snap], b: &[Snap]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: b.len(), got: a.len() });
    }
    for (sa, sb) in a.iter().zip(b) {
        if (sa.time - sb.time).abs() > 1e-9 * sb.time.abs().max(1.0) {
            return Err(Error::Config(format!("snapshot times differ: {} vs {}", sa.time, sb.time)));
        }
        if sa.density.len() != sb.density.len() {
            return Err(Error::LengthMismatch { expected: sb.density.len(), got: sa.density.len() });
        }
    }
    Ok(())
}

fn sq_sums(a: &[f64], b: &[f64]) -> (f64, f64) {
    a.iter().zip(b).fold((0.0, 0.0), |(d, r), (x, y)| (d + (x - y) * (x - y), r + y * y))
}

/// Relative space-time `l2` distance between two density histories, with `b`
/// as the reference. Snapshots are equally spaced, so the `dx` and time
/// weights cancel.
pub fn space_time_error(a: &[Snap], b: &[Snap]) -> Result<f64> {
    check_aligned(a, b)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (sa, sb) in a.iter().zip(b) {
        let (d, r) = sq_sums(sa.density.as_slice(), sb.density.as_slice());
        num += d;
        den += r;
    }
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((num / den).sqrt())
}

/// Per-snapshot relative `l2` errors.
pub fn snapshot_errors(a: &[Snap], b: &[Snap]) -> Result<Vec<f64>> {
    check_aligned(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(sa, sb)| {
            let (d, r) = sq_sums(sa.density.as_slice(), sb.density.as_slice());
            (d / r).sqrt()
        })
        .collect())
}

/// Largest relative deviation of `trace + discarded_mass` from its initial
/// value.
pub fn mass_drift(snaps: &[Snap]) -> f64 {
    let Some(first) = snaps.first() else { return 0.0 };
    let m0 = first.trace + first.discarded_mass;
    snaps.iter().map(|s| ((s.trace + s.discarded_mass - m0) / m0).abs()).fold(0.0, f64::max)
}

pub fn build_scenario(cfg: &SimConfig) -> Result<Scenario<f64>> {
    cfg.validate()?;
    Scenario::build(cfg.scenario, &cfg.grid()?, &cfg.scenario_params())
}

pub fn run_qle(cfg: &SimConfig, scenario: &Scenario<f64>) -> Result<Run<f64, DensityOperator<f64>>> {
    let mut solver = QleSolver::new(cfg.grid()?, scenario.v_ext_run.clone(), cfg.qle_config())?;
    let stride = cfg.stride_steps(cfg.time_step)?;
    solver.run(&scenario.rho0, cfg.final_time, stride, |s| {
        log::info!("qle t = {:.5} trace = {:.12}", s.time, s.trace + s.discarded_mass)
    })
}

pub fn run_qdd(cfg: &SimConfig, scenario: &Scenario<f64>) -> Result<Run<f64, QddState<f64>>> {
    let mut solver = QddSolver::new(cfg.grid()?, scenario.v_ext_run.clone(), cfg.qdd_config())?;
    let stride = cfg.stride_steps(cfg.qdd_step())?;
    solver.run(&scenario.rho0.local_density(), cfg.final_time, stride, |s| {
        log::info!("qdd t = {:.5} mass = {:.12}", s.time, s.trace)
    })
}

/// Scalar outcome of a QLE/QDD comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub epsilon: f64,
    /// Space-time error over the snapshots both runs reached.
    pub error: f64,
    pub snapshot_times: Vec<f64>,
    pub snapshot_errors: Vec<f64>,
    pub qle_mass_drift: f64,
    pub qdd_mass_drift: f64,
    pub qle_steps: usize,
    pub qdd_steps: usize,
    pub qle_failure: Option<String>,
    pub qdd_failure: Option<String>,
}

impl ComparisonReport {
    pub fn is_complete(&self) -> bool {
        self.qle_failure.is_none() && self.qdd_failure.is_none()
    }
}

#[derive(Debug)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub qle: Run<f64, DensityOperator<f64>>,
    pub qdd: Run<f64, QddState<f64>>,
    /// Wall-clock seconds of each solver.
    pub timings: Vec<PhaseTiming>,
}

impl Comparison {
    /// The error that stopped either run, if any.
    pub fn failure(&self) -> Option<&Error> {
        self.qle.failure.as_ref().or(self.qdd.failure.as_ref())
    }

    /// Snapshots reached by both runs.
    pub fn aligned(&self) -> (&[Snap], &[Snap]) {
        let k = self.qle.snapshots.len().min(self.qdd.snapshots.len());
        (&self.qle.snapshots[..k], &self.qdd.snapshots[..k])
    }
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed().as_secs_f64())
}

/// Runs QLE and QDD from the same initial data (the two on separate
/// threads) and compares their densities at common snapshot times.
pub fn run_comparison(cfg: &SimConfig) -> Result<Comparison> {
    let (scenario, t_setup) = timed(|| build_scenario(cfg));
    let scenario = scenario?;
    let ((qle, t_qle), (qdd, t_qdd)) = std::thread::scope(|s| {
        let qle = s.spawn(|| timed(|| run_qle(cfg, &scenario)));
        let qdd = timed(|| run_qdd(cfg, &scenario));
        (qle.join().expect("QLE thread panicked"), qdd)
    });
    let (qle, qdd) = (qle?, qdd?);
    let k = qle.snapshots.len().min(qdd.snapshots.len());
    let (a, b) = (&qle.snapshots[..k], &qdd.snapshots[..k]);
    let report = ComparisonReport {
        scenario: cfg.scenario.to_string(),
        epsilon: cfg.epsilon,
        error: space_time_error(a, b)?,
        snapshot_times: b.iter().map(|s| s.time).collect(),
        snapshot_errors: snapshot_errors(a, b)?,
        qle_mass_drift: mass_drift(&qle.snapshots),
        qdd_mass_drift: mass_drift(&qdd.snapshots),
        qle_steps: qle.steps_completed,
        qdd_steps: qdd.steps_completed,
        qle_failure: qle.failure.as_ref().map(ToString::to_string),
        qdd_failure: qdd.failure.as_ref().map(ToString::to_string),
    };
    let timings = vec![
        PhaseTiming { phase: "setup".into(), seconds: t_setup },
        PhaseTiming { phase: "qle".into(), seconds: t_qle },
        PhaseTiming { phase: "qdd".into(), seconds: t_qdd },
    ];
    Ok(Comparison { report, qle, qdd, timings })
}

/// Writes `t,x,<columns...>` rows, one per snapshot and grid point. Floats
/// use the shortest representation that parses back to the same value.
pub fn write_density_csv(path: &Path, columns: &[&str], runs: &[&[Snap]]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,x,{}", columns.join(","))?;
    let Some(first) = runs.first() else { return Ok(w.flush()?) };
    let k = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    for s in 0..k {
        let n = first[s].density.len();
        let dx = 1.0 / (n as f64 + 1.0);
        for i in 0..n {
            write!(w, "{},{}", first[s].time, (i + 1) as f64 * dx)?;
            for r in runs {
                write!(w, ",{}", r[s].density.as_slice()[i])?;
            }
            writeln!(w)?;
        }
    }
    Ok(w.flush()?)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(w.flush()?)
}

pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_JSON: &str = "comparison.json";
pub const PLOT_SCRIPT: &str = "comparison.gp";
pub const MANIFEST: &str = "manifest.json";

/// Writes the comparison CSV, its JSON summary and a plot script into
/// `dir`; returns the file names.
pub fn write_comparison(c: &Comparison, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let (a, b) = c.aligned();
    write_density_csv(&dir.join(COMPARISON_CSV), &["n_qle", "n_qdd"], &[a, b])?;
    write_json(&dir.join(COMPARISON_JSON), &c.report)?;
    std::fs::write(dir.join(PLOT_SCRIPT), emit_plot_script(&c.report, COMPARISON_CSV, PlotStyle::Png))?;
    Ok(vec![COMPARISON_CSV.into(), COMPARISON_JSON.into(), PLOT_SCRIPT.into()])
}

/// Writes a single-solver trajectory (`<name>.csv`, `t,x,n`) into `dir`.
pub fn write_trajectory(name: &str, snaps: &[Snap], dir: &Path) -> Result<String> {
    std::fs::create_dir_all(dir)?;
    let file = format!("{name}.csv");
    write_density_csv(&dir.join(&file), &["n"], &[snaps])?;
    Ok(file)
}

/// Reads back a file written by [`write_density_csv`] with two density
/// columns and recomputes the space-time error of the first against the
/// second.
pub fn error_from_csv(path: &Path) -> Result<f64> {
    let text = std::fs::read_to_string(path)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if cols.len() != 4 {
            return Err(Error::Config(format!("{}:{}: expected 4 columns", path.display(), lineno + 1)));
        }
        num += (cols[2] - cols[3]).powi(2);
        den += cols[3] * cols[3];
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlotStyle {
    Png,
    Pdf,
}

/// Gnuplot script drawing QLE and QDD densities at four snapshot times in a
/// 2x2 layout, reading `csv` (columns `t,x,n_qle,n_qdd`).
pub fn emit_plot_script(report: &ComparisonReport, csv: &str, style: PlotStyle) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {} (epsilon = {}), space-time error {:.4e}", report.scenario, report.epsilon, report.error);
    let times = &report.snapshot_times;
    if times.is_empty() {
        return s;
    }
    let (term, ext) = match style {
        PlotStyle::Png => ("pngcairo size 1200,900", "png"),
        PlotStyle::Pdf => ("pdfcairo size 8in,6in", "pdf"),
    };
    let stem = csv.strip_suffix(".csv").unwrap_or(csv);
    let _ = writeln!(s, "set terminal {term}");
    let _ = writeln!(s, "set output '{stem}.{ext}'");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set xlabel 'x'\nset ylabel 'n'");
    let _ = writeln!(s, "set multiplot layout 2,2");
    let last = times.len() - 1;
    let mut picks: Vec<usize> = (0..4).map(|m| (m * last + 1) / 3).collect();
    picks.dedup();
    for idx in picks {
        let t = times[idx];
        let sel = format!("(abs($1-{t})<1e-12*(1+{t})?$2:1/0)");
        let _ = writeln!(s, "set title 't = {t}'");
        let _ = writeln!(
            s,
            "plot '{csv}' every ::1 using {sel}:3 with lines title 'QLE', '' every ::1 using {sel}:4 with lines dt 2 title 'QDD'"
        );
    }
    let _ = writeln!(s, "unset multiplot");
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

/// Record of one invocation: the resolved configuration, the program
/// version, phase timings and every file written next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: SimConfig,
    /// `key = value` form of `config`, accepted by `--config`.
    pub config_kv: String,
    pub timings: Vec<PhaseTiming>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &SimConfig) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: *config,
            config_kv: config.to_kv(),
            timings: Vec::new(),
            files: Vec::new(),
        }
    }

    /// Writes `manifest.json` into `dir`, listing itself among the files.
    pub fn write(&mut self, dir: &Path) -> Result<()> {
        if !self.files.iter().any(|f| f == MANIFEST) {
            self.files.push(MANIFEST.into());
        }
        write_json(&dir.join(MANIFEST), self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub error: f64,
    /// Order measured against the previous (larger) step.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub reference_h: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log h`.
    pub fitted_order: f64,
    /// Errors decrease with the step.
    pub monotone: bool,
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_order(hs: &[f64], errors: &[f64]) -> f64 {
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Self-convergence table: `solve(h)` for every step in `steps` is compared
/// with `reference` through `dist`. Non-monotone errors are flagged, not
/// fatal.
pub fn convergence_table<S>(
    steps: &[f64],
    reference_h: f64,
    reference: &S,
    mut solve: impl FnMut(f64) -> Result<S>,
    dist: impl Fn(&S, &S) -> f64,
) -> Result<ConvergenceStudy> {
    let mut hs = steps.to_vec();
    hs.sort_by(|a, b| b.total_cmp(a));
    hs.dedup();
    if hs.len() < 2 {
        return Err(Error::Config("a convergence study needs at least two steps".into()));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(hs.len());
    for &h in &hs {
        let error = dist(&solve(h)?, reference);
        let order = rows.last().map(|p| (p.error / error).ln() / (p.h / h).ln());
        rows.push(ConvergenceRow { h, error, order });
    }
    let monotone = rows.windows(2).all(|w| w[1].error < w[0].error);
    if !monotone {
        log::warn!("convergence errors are not monotone in h");
    }
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    Ok(ConvergenceStudy { reference_h, fitted_order: fit_order(&hs, &errors), rows, monotone })
}

/// QLE self-convergence on the configured scenario over `[0, final_time]`,
/// measured in the Hilbert-Schmidt norm at the final time.
pub fn run_convergence_study(cfg: &SimConfig, steps: &[f64], reference_h: f64) -> Result<ConvergenceStudy> {
    let hmin = steps.iter().copied().fold(f64::INFINITY, f64::min);
    if !(reference_h > 0.0) || reference_h > hmin / 4.0 * (1.0 + 1e-12) {
        return Err(Error::Config(format!("reference step {reference_h} must be at most min(h)/4 = {}", hmin / 4.0)));
    }
    for &h in steps.iter().chain([&reference_h]) {
        let k = step_count(cfg.final_time, h) as f64;
        if (k * h - cfg.final_time).abs() > 1e-9 * cfg.final_time.max(h) {
            return Err(Error::Config(format!("final time {} is not a multiple of {h}", cfg.final_time)));
        }
    }
    let scenario = build_scenario(cfg)?;
    let solve = |h: f64| -> Result<DensityOperator<f64>> {
        let mut qc = cfg.qle_config();
        qc.h = h;
        let mut solver = QleSolver::new(cfg.grid()?, scenario.v_ext_run.clone(), qc)?;
        let run = solver.run(&scenario.rho0, cfg.final_time, usize::MAX, |_| {})?.into_result()?;
        Ok(run.final_state)
    };
    let reference = solve(reference_h)?;
    convergence_table(steps, reference_h, &reference, solve, |a, b| a.hs_distance(b))
}
