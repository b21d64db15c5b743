use proptest::prelude::*;

use qlbgk::grid::solve_tridiagonal;
use qlbgk::harness::space_time_error;
use qlbgk::linalg::tridiagonal_eigenvalues;
use qlbgk::{DensityField, ScenarioKind, SimConfig, Snapshot64, Tridiagonal};

fn symmetric_tridiagonal() -> impl Strategy<Value = Tridiagonal<f64>> {
    (2usize..40).prop_flat_map(|n| {
        (prop::collection::vec(-5.0..5.0f64, n), prop::collection::vec(-3.0..3.0f64, n - 1))
            .prop_map(|(d, e)| Tridiagonal::symmetric(d, e))
    })
}

fn snaps(rows: &[Vec<f64>]) -> Vec<Snapshot64> {
    rows.iter()
        .enumerate()
        .map(|(k, r)| Snapshot64 {
            step: k,
            time: k as f64 * 1e-3,
            density: DensityField::new(r.clone()).unwrap(),
            trace: 1.0,
            discarded_mass: 0.0,
            chemical_potential: None,
            poisson_potential: None,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // the first two spectral moments are the trace and the Frobenius norm
    #[test]
    fn eigenvalue_moments(op in symmetric_tridiagonal()) {
        let ev = tridiagonal_eigenvalues(&op).unwrap();
        let trace: f64 = op.diag.iter().sum();
        let frob: f64 = op.diag.iter().map(|d| d * d).sum::<f64>()
            + 2.0 * op.off().iter().map(|e| e * e).sum::<f64>();
        prop_assert!((ev.iter().sum::<f64>() - trace).abs() < 1e-10 * (1.0 + frob));
        prop_assert!((ev.iter().map(|l| l * l).sum::<f64>() - frob).abs() < 1e-10 * (1.0 + frob));
        prop_assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn tridiagonal_solve_residual(
        op in symmetric_tridiagonal(),
        seed in prop::collection::vec(-1.0..1.0f64, 40),
    ) {
        // shift to strict diagonal dominance
        let n = op.len();
        let shift: Vec<f64> = (0..n).map(|i| 7.0 - op.diag[i] + op.diag[i].abs()).collect();
        let a = op.with_diagonal_added(&shift);
        let rhs = &seed[..n];
        let x = solve_tridiagonal(&a, rhs).unwrap();
        let r = a.apply(&x);
        for (ri, bi) in r.iter().zip(rhs) {
            prop_assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn space_time_error_is_scale_free(
        rows in prop::collection::vec(prop::collection::vec(0.1..2.0f64, 12), 1..6),
        noise in prop::collection::vec(-0.05..0.05f64, 72),
        c in 0.01..100.0f64,
    ) {
        let perturbed: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .map(|(k, r)| r.iter().enumerate().map(|(i, v)| v + noise[k * 12 + i]).collect())
            .collect();
        let scale = |m: &[Vec<f64>]| m.iter().map(|r| r.iter().map(|v| v * c).collect()).collect::<Vec<Vec<f64>>>();
        let e = space_time_error(&snaps(&perturbed), &snaps(&rows)).unwrap();
        let es = space_time_error(&snaps(&scale(&perturbed)), &snaps(&scale(&rows))).unwrap();
        prop_assert!((e - es).abs() <= 1e-12 * (1.0 + e));
        prop_assert_eq!(space_time_error(&snaps(&rows), &snaps(&rows)).unwrap(), 0.0);
    }

    #[test]
    fn config_kv_round_trip(
        kind in 0usize..3,
        n in 8usize..2000,
        eps in 1e-4..1.0f64,
        beta in 1e-3..1.0f64,
        h in 1e-7..1e-2f64,
        qdd_h in prop::option::of(1e-7..1e-2f64),
    ) {
        let cfg = SimConfig {
            scenario: ScenarioKind::ALL[kind],
            grid_points: n,
            epsilon: eps,
            beta,
            time_step: h,
            qdd_time_step: qdd_h,
            ..SimConfig::default()
        };
        prop_assert_eq!(SimConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }
}
