//! Validation suite. Every test prints one `PASS` or `FAIL` line with the
//! measured quantity before asserting on it.
//!
//! The comparison runs take minutes each in an optimized build; the
//! `eps = 0.0025` wave-packet run takes hours and is ignored by default.

use std::io::Write;
use std::sync::OnceLock;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qlbgk::equilibrium::{eval_j, gibbs_density, grad_j, minimize_j, surrogate_minimizer};
use qlbgk::grid::solve_poisson;
use qlbgk::harness::{self, Comparison};
use qlbgk::qdd::{eval_j_qdd, grad_j_qdd};
use qlbgk::{preset, DensityOperator, Grid, QddSolver, QleConfig, QleSolver, SimConfig};

type C = Complex<f64>;

// written straight to stdout so the line survives libtest's output capture
fn verdict(id: &str, pass: bool, detail: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
    drop(out);
    assert!(pass, "criterion {id}: {detail}");
}

fn comparison(name: &str, epsilon: f64) -> Comparison {
    let cfg = SimConfig { epsilon, ..preset(name).unwrap() };
    let c = harness::run_comparison(&cfg).unwrap();
    assert!(c.report.is_complete(), "{name} eps = {epsilon} stopped early: {:?}", c.failure());
    c
}

fn maxwellian_run() -> &'static Comparison {
    static RUN: OnceLock<Comparison> = OnceLock::new();
    RUN.get_or_init(|| comparison("maxwellian", 0.01))
}

#[test]
fn criterion_1_maxwellian_comparison() {
    let e = maxwellian_run().report.error;
    verdict("1", (0.005..=0.05).contains(&e), format!("maxwellian eps = 0.01, space-time error {e:.4e} in [0.005, 0.05]"));
}

#[test]
fn criterion_2_hamiltonian_function_comparison() {
    let e = comparison("hamiltonian-function", 0.01).report.error;
    verdict(
        "2",
        (0.005..=0.05).contains(&e),
        format!("function of the Hamiltonian, eps = 0.01, space-time error {e:.4e} in [0.005, 0.05]"),
    );
}

#[test]
fn criterion_3_wave_packets_comparison() {
    let fine = comparison("wave-packets", 0.01).report.error;
    let coarse = comparison("wave-packets", 0.1).report.error;
    let ratio = coarse / fine;
    verdict(
        "3",
        (0.01..=0.10).contains(&fine) && ratio >= 2.0,
        format!("wave packets: eps = 0.01 error {fine:.4e} in [0.01, 0.10]; eps = 0.1 error {coarse:.4e}, ratio {ratio:.2} >= 2"),
    );
}

#[test]
#[ignore = "hours-scale run"]
fn criterion_3_wave_packets_small_epsilon() {
    let e = comparison("wave-packets-eps0.0025", 0.0025).report.error;
    verdict("3b", (0.002..=0.03).contains(&e), format!("wave packets eps = 0.0025, h = 5e-6: error {e:.4e} in [0.002, 0.03]"));
}

#[test]
fn criterion_4_conservation() {
    let run = maxwellian_run();
    let qle_drift = harness::mass_drift(&run.qle.snapshots);
    // truncation removes mass on purpose; the raw trace is reported too
    let raw: Vec<f64> = run.qle.snapshots.iter().map(|s| s.trace).collect();
    let raw_drift = raw.iter().map(|t| (t - raw[0]).abs() / raw[0]).fold(0.0, f64::max);

    // QDD mass, step by step
    let cfg = preset("maxwellian").unwrap();
    let scenario = harness::build_scenario(&cfg).unwrap();
    let grid = cfg.grid().unwrap();
    let mut qdd = QddSolver::new(grid, scenario.v_ext_run.clone(), cfg.qdd_config()).unwrap();
    let mut state = qdd.initial_state(&scenario.rho0.local_density()).unwrap();
    let mut step_drift: f64 = 0.0;
    for _ in 0..20 {
        let next = qdd.step(&state).unwrap();
        let (m0, m1) = (state.mass(&grid), next.mass(&grid));
        step_drift = step_drift.max((m1 - m0).abs() / m0);
        state = next;
    }
    let snaps = &run.qdd.snapshots;
    for w in snaps.windows(2) {
        step_drift = step_drift.max((w[1].trace - w[0].trace).abs() / w[0].trace);
    }

    // collision invariant at the paper tolerance
    let mut qle = QleSolver::new(grid, scenario.v_ext_run.clone(), cfg.qle_config()).unwrap();
    let before = qle.transport_step(&scenario.rho0, cfg.time_step / 2.0).unwrap();
    let after = qle.collision_step(&before, cfg.time_step).unwrap();
    let (nb, na) = (before.local_density(), after.local_density());
    let collision_defect = nb.iter().zip(na.iter()).map(|(b, a)| (a - b).abs() / b).fold(0.0, f64::max);

    verdict(
        "4",
        qle_drift <= 1e-8 && step_drift <= 1e-10 && collision_defect <= 1e-4,
        format!(
            "QLE trace + truncated mass drift {qle_drift:.2e} <= 1e-8 (raw trace drift {raw_drift:.2e}); \
             QDD mass change per step {step_drift:.2e} <= 1e-10; collision density defect {collision_defect:.2e} <= 1e-4"
        ),
    );
}

fn smooth_random(grid: &Grid<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c: Vec<(f64, f64)> = (1..=4).map(|_| (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
    let shift = rng.gen_range(-1.0..1.0);
    grid.nodes()
        .iter()
        .map(|&x| {
            let pi = std::f64::consts::PI;
            shift + c.iter().enumerate().map(|(m, (a, b))| {
                let k = (m + 1) as f64 * pi;
                a * (k * x).cos() + b * (k * x).sin()
            }).sum::<f64>()
        })
        .collect()
}

#[test]
fn criterion_5_equilibrium_round_trip_and_gradients() {
    let grid = Grid::new(100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let a_true = smooth_random(&grid, &mut rng);
        let n = gibbs_density(&a_true, 0.1, &grid).unwrap();
        let (a, _) = minimize_j(&n, 0.1, &grid, 1e-10, None).unwrap();
        worst = worst.max(a.iter().zip(&a_true).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }

    // central differences at N = 16
    let g16 = Grid::new(16).unwrap();
    let a = smooth_random(&g16, &mut rng);
    let n = gibbs_density(&smooth_random(&g16, &mut rng), 0.1, &g16).unwrap();
    let w: Vec<f64> = g16.nodes().iter().map(|x| (2.0 * x).sin()).collect();
    let (beta, h, d) = (0.1, 1e-2, 1e-5);
    let rel = |fd: &[f64], an: &[f64]| {
        let err = fd.iter().zip(an).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        err / an.iter().map(|q| q * q).sum::<f64>().sqrt()
    };
    let central = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
        (0..a.len())
            .map(|i| {
                let mut p = a.clone();
                let mut m = a.clone();
                p[i] += d;
                m[i] -= d;
                (f(&p) - f(&m)) / (2.0 * d)
            })
            .collect()
    };
    let fd_j: Vec<f64> = central(&|x| eval_j(x, &n, beta, &g16).unwrap()).iter().map(|v| v / g16.dx()).collect();
    let err_j = rel(&fd_j, &grad_j(&a, &n, beta, &g16).unwrap());
    let fd_q = central(&|x| eval_j_qdd(x, &n, &w, h, beta, &g16).unwrap());
    let err_q = rel(&fd_q, &grad_j_qdd(&a, &n, &w, h, beta, &g16).unwrap());

    verdict(
        "5",
        worst <= 1e-4 && err_j <= 1e-6 && err_q <= 1e-6,
        format!("round trip max error {worst:.2e} <= 1e-4; FD gradient mismatch J {err_j:.2e}, J_QDD {err_q:.2e} <= 1e-6"),
    );
}

#[test]
fn criterion_6_splitting_order() {
    let cfg = SimConfig { final_time: 0.01, ..preset("maxwellian").unwrap() };
    let study = harness::run_convergence_study(&cfg, &[4e-4, 2e-4, 1e-4], 2.5e-5).unwrap();
    let rows: Vec<String> = study
        .rows
        .iter()
        .map(|r| format!("h = {:e}: {:.3e}{}", r.h, r.error, r.order.map_or(String::new(), |o| format!(" (order {o:.2})"))))
        .collect();
    verdict("6", study.fitted_order >= 1.8, format!("fitted order {:.3} >= 1.8 [{}]", study.fitted_order, rows.join("; ")));
}

/// `d psi / dt = -i (H_L - V[n] / (sqrt 2 beta eps)) psi` for every mode.
fn schrodinger_poisson_rhs(s: &QleSolver<f64>, weights: &[f64], modes: &[Vec<C>]) -> Vec<Vec<C>> {
    let g = s.grid();
    let mut n = vec![0.0; g.len()];
    for (w, m) in weights.iter().zip(modes) {
        for (ni, z) in n.iter_mut().zip(m) {
            *ni += w * z.norm_sqr();
        }
    }
    let v = solve_poisson(&n, s.config().alpha, g).unwrap();
    let k = 1.0 / s.config().transport_scale();
    modes
        .iter()
        .map(|m| {
            let hm = s.transport_hamiltonian().apply_complex(m);
            hm.iter().zip(m).zip(&v).map(|((a, z), vj)| C::new(0.0, -1.0) * (a - z * (k * vj))).collect()
        })
        .collect()
}

fn rk4(s: &QleSolver<f64>, weights: &[f64], modes: &[Vec<C>], t: f64, steps: usize) -> Vec<Vec<C>> {
    let dt = t / steps as f64;
    let axpy = |a: &[Vec<C>], b: &[Vec<C>], c: f64| -> Vec<Vec<C>> {
        a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q * c).collect()).collect()
    };
    let mut y = modes.to_vec();
    for _ in 0..steps {
        let k1 = schrodinger_poisson_rhs(s, weights, &y);
        let k2 = schrodinger_poisson_rhs(s, weights, &axpy(&y, &k1, dt / 2.0));
        let k3 = schrodinger_poisson_rhs(s, weights, &axpy(&y, &k2, dt / 2.0));
        let k4 = schrodinger_poisson_rhs(s, weights, &axpy(&y, &k3, dt));
        for i in 0..y.len() {
            for j in 0..y[i].len() {
                y[i][j] += (k1[i][j] + k2[i][j] * 2.0 + k3[i][j] * 2.0 + k4[i][j]) * (dt / 6.0);
            }
        }
    }
    y
}

#[test]
fn criterion_7_transport_fidelity() {
    // norm preservation over many Cayley steps on a large grid
    let g = Grid::new(200).unwrap();
    let v: Vec<f64> = g.nodes().iter().map(|x: &f64| 3.0 * (7.0 * x).sin()).collect();
    let mut s = QleSolver::new(g, v, QleConfig::new(1e-3, 0.05, 0.05, 1.0)).unwrap();
    let modes: Vec<Vec<C>> = (1..=3)
        .map(|p| {
            let raw: Vec<C> = g.nodes().iter().map(|&x| C::from_polar(1.0 + x, 5.0 * p as f64 * x)).collect();
            let norm = (g.dx() * raw.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
            raw.into_iter().map(|z| z / norm).collect()
        })
        .collect();
    let mut rho = DensityOperator::from_vectors(g, vec![0.5, 0.3, 0.2], modes).unwrap();
    for _ in 0..200 {
        rho = s.kinetic_half_step(&rho, 0.013).unwrap();
    }
    let norm_defect = rho.orthonormality_defect();

    // per-step error against RK4 on the full Schrodinger-Poisson system
    let g8 = Grid::new(8).unwrap();
    let v8: Vec<f64> = g8.nodes().iter().map(|x| 0.5 * x).collect();
    let mut cfg = QleConfig::new(1e-3, 0.5, 0.3, 0.2);
    cfg.truncation_threshold = 0.0;
    let mut s8 = QleSolver::new(g8, v8, cfg).unwrap();
    let start: Vec<Vec<C>> = (1..=2)
        .map(|p| {
            let raw: Vec<C> = g8.nodes().iter().map(|&x| C::from_polar(1.0 + 0.3 * p as f64 * x, 2.0 * p as f64 * x)).collect();
            let norm = (g8.dx() * raw.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
            raw.into_iter().map(|z| z / norm).collect()
        })
        .collect();
    let rho8 = DensityOperator::from_vectors(g8, vec![0.6, 0.4], start).unwrap();
    let errors: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&t| {
            let split = s8.transport_step(&rho8, t).unwrap();
            let exact = rk4(&s8, rho8.weights(), rho8.modes(), t, 4000);
            split
                .modes()
                .iter()
                .zip(&exact)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
                .fold(0.0, f64::max)
        })
        .collect();
    let slopes: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    verdict(
        "7",
        norm_defect <= 1e-12 && slopes.iter().all(|&s| s >= 2.0),
        format!("mode orthonormality defect {norm_defect:.2e} <= 1e-12; per-step errors [{}], slopes {slopes:.2?} >= 2", shown.join(", ")),
    );
}

/// Minimum of a unimodal function on `[lo, hi]` by golden-section search.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-9 * (1.0 + hi.abs()) {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

#[test]
fn criterion_8_surrogate_line_search() {
    let grid = Grid::new(400).unwrap();
    let x = grid.nodes();
    let a: Vec<f64> = x.iter().map(|x: &f64| (4.0 * x).cos().powi(3) + x).collect();
    let s: Vec<f64> = x.iter().map(|x| 1.0 / (1.0 + x * x)).collect();
    let a1: Vec<f64> = x.iter().map(|x| (6.0 * x + 1.0).cos().cos()).collect();
    let mut lines = Vec::new();
    let mut pass = true;
    for beta in [0.015, 0.1, 0.5] {
        let n = gibbs_density(&a1, beta, &grid).unwrap();
        let line = |b: f64| {
            let shifted: Vec<f64> = a.iter().zip(&s).map(|(p, q)| p + b * q).collect();
            eval_j(&shifted, &n, beta, &grid).unwrap()
        };
        let b_hat: f64 = surrogate_minimizer(&a, &s, n.as_slice(), beta, &grid).unwrap();
        // bracket the exact minimizer well beyond the surrogate estimate
        let span = 4.0 * b_hat.abs().max(1.0);
        let (b_min, j_min) = golden_min(line, -span, span);
        let gap = line(b_hat) - j_min;
        let budget = 0.01 * (line(0.0) - j_min);
        pass &= gap <= budget;
        lines.push(format!("beta = {beta}: b_hat {b_hat:.4}, b* {b_min:.4}, gap/decrease {:.2e}", gap / (line(0.0) - j_min)));
    }
    verdict("8", pass, format!("surrogate within 1% of the exact decrease [{}]", lines.join("; ")));
}

#[test]
fn criterion_9_semiclassical_density() {
    let beta = 0.005;
    let grid = Grid::new(1000).unwrap();
    let a: Vec<f64> = grid.nodes().iter().map(|x: &f64| 0.5 * (2.0 * std::f64::consts::PI * x).sin() + 0.3 * x).collect();
    let n = gibbs_density(&a, beta, &grid).unwrap();
    let scale = 1.0 / ((4.0 * std::f64::consts::PI).sqrt() * beta);
    let mut worst: f64 = 0.0;
    for (i, x) in grid.nodes().iter().enumerate() {
        if (0.1..=0.9).contains(x) {
            let law = scale * (-a[i]).exp();
            worst = worst.max((n[i] - law).abs() / law);
        }
    }
    verdict("9", worst <= 0.05, format!("beta = 0.005: max relative deviation from exp(-A)/(sqrt(4 pi) beta) on [0.1, 0.9] {worst:.3e} <= 0.05"));
}
