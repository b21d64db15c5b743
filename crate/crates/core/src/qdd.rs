//! First-order scheme for the quantum drift-diffusion model.
//!
//! With the Poisson potential treated explicitly, one step
//!
//! ```text
//! (n^{k+1} - n^k) / h + D~-(n^k D+(A + W)) / 2 + D~+(n^k D-(A + W)) / 2 = 0,
//! alpha^2 Lap_Dir V^k = n^k,   W^k = V^k + V_ext,   n^{k+1} = n[exp(-(H0 + A))]
//! ```
//!
//! is the Euler-Lagrange equation of a strictly convex functional of
//! `A = A^{k+1}`, minimized with the same conjugate gradient engine as the
//! equilibrium problem.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    calibrated_derivatives, free_hamiltonian, minimize, semiclassical_guess, DensityFunctional, Functional, GibbsSpectrum, MinimizeReport,
    NlcgOptions,
};
use crate::error::{Error, Result};
use crate::grid::{difference_matrices, solve_poisson, solve_tridiagonal, DensityField, DifferenceOperators, Grid, Tridiagonal};
use crate::scalar::{dot, Real};
use crate::trajectory::{step_count, Run, Snapshot};

/// `J_QDD(A) = (h dx/4) sum n (D+ w)^2 + (h dx/4) sum n (D- w)^2
///            + sum exp(-lambda_p[A]) + dx sum n A`,  `w = A + W`.
#[derive(Debug, Clone)]
pub struct QddFunctional<'a, T: Real> {
    grid: Grid<T>,
    h0: &'a Tridiagonal<T>,
    ops: &'a DifferenceOperators<T>,
    beta: T,
    n: &'a [T],
    w: &'a [T],
    h: T,
    /// `dx diag(n)` plus the Hessian of the dissipation part.
    hessian_model: Tridiagonal<T>,
}

impl<'a, T: Real> QddFunctional<'a, T> {
    pub fn new(
        grid: Grid<T>,
        h0: &'a Tridiagonal<T>,
        ops: &'a DifferenceOperators<T>,
        beta: T,
        n: &'a [T],
        w: &'a [T],
        h: T,
    ) -> Result<Self> {
        grid.check_len(n.len())?;
        grid.check_len(w.len())?;
        grid.check_len(h0.len())?;
        if let Some((index, &value)) = n.iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
            return Err(Error::NonPositiveDensity { index, value: value.to_f64_lossy() });
        }
        if !(h >= T::zero()) {
            return Err(Error::Config(format!("time step must be non-negative, got {h}")));
        }
        let mut f = Self { grid, h0, ops, beta, n, w, h, hessian_model: Tridiagonal::symmetric(Vec::new(), Vec::new()) };
        f.hessian_model = f.assemble_hessian_model();
        Ok(f)
    }

    /// `(h dx / 2) (D+^T n D+ + D-^T n D-) u`.
    fn dissipation_hessian(&self, u: &[T]) -> Vec<T> {
        let (dp, dm) = self.differences(u);
        let fp: Vec<T> = self.n.iter().zip(&dp).map(|(&n, &p)| n * p).collect();
        let fm: Vec<T> = self.n.iter().zip(&dm).map(|(&n, &m)| n * m).collect();
        let gp = self.ops.forward.apply_transpose(&fp);
        let gm = self.ops.backward.apply_transpose(&fm);
        let c = self.h * self.grid.dx() * T::lit(0.5);
        gp.iter().zip(&gm).map(|(&p, &m)| c * (p + m)).collect()
    }

    // The model is tridiagonal, so three comb vectors recover all of it.
    fn assemble_hessian_model(&self) -> Tridiagonal<T> {
        let len = self.n.len();
        let dx = self.grid.dx();
        let mut diag = vec![T::zero(); len];
        let mut lower = vec![T::zero(); len.saturating_sub(1)];
        let mut upper = vec![T::zero(); len.saturating_sub(1)];
        for r in 0..3 {
            let comb: Vec<T> = (0..len).map(|j| if j % 3 == r { T::one() } else { T::zero() }).collect();
            let col = self.dissipation_hessian(&comb);
            for i in 0..len {
                if i % 3 == r {
                    diag[i] = col[i] + dx * self.n[i];
                } else if i >= 1 && (i - 1) % 3 == r {
                    lower[i - 1] = col[i];
                } else if i + 1 < len && (i + 1) % 3 == r {
                    upper[i] = col[i];
                }
            }
        }
        Tridiagonal::general(lower, diag, upper)
    }

    /// `(D+ u, D- u)`.
    fn differences(&self, u: &[T]) -> (Vec<T>, Vec<T>) {
        (self.ops.forward.apply(u), self.ops.backward.apply(u))
    }

    fn potential(&self, a: &[T]) -> Vec<T> {
        a.iter().zip(self.w).map(|(&x, &y)| x + y).collect()
    }

    /// Dissipation part of the functional.
    fn quadratic(&self, a: &[T]) -> T {
        let (dp, dm) = self.differences(&self.potential(a));
        let s: T = self.n.iter().zip(dp.iter().zip(&dm)).map(|(&n, (&p, &m))| n * (p * p + m * m)).sum();
        self.h * self.grid.dx() * T::lit(0.25) * s
    }
}

impl<'a, T: Real> Functional<T> for QddFunctional<'a, T> {
    fn grid(&self) -> &Grid<T> {
        &self.grid
    }
    fn hamiltonian(&self) -> &Tridiagonal<T> {
        self.h0
    }
    fn beta(&self) -> T {
        self.beta
    }
    fn target(&self) -> &[T] {
        self.n
    }

    fn value_and_gradient(&self, a: &[T], spectrum: &GibbsSpectrum<T>) -> (T, Vec<T>) {
        let dx = self.grid.dx();
        let (dp, dm) = self.differences(&self.potential(a));
        let quad: T = self.n.iter().zip(dp.iter().zip(&dm)).map(|(&n, (&p, &m))| n * (p * p + m * m)).sum();
        let value = self.h * dx * T::lit(0.25) * quad + spectrum.trace + dx * dot(a, self.n);
        let fp: Vec<T> = self.n.iter().zip(&dp).map(|(&n, &p)| n * p).collect();
        let fm: Vec<T> = self.n.iter().zip(&dm).map(|(&n, &m)| n * m).collect();
        let gp = self.ops.forward.apply_transpose(&fp);
        let gm = self.ops.backward.apply_transpose(&fm);
        let c = self.h * dx * T::lit(0.5);
        let gradient = (0..a.len())
            .map(|i| c * (gp[i] + gm[i]) + dx * (self.n[i] - spectrum.density[i]))
            .collect();
        (value, gradient)
    }

    /// Inverse of `dx diag(n)` plus the exact dissipation Hessian. The
    /// spectral part is modeled by its low-frequency limit, which the growing
    /// dissipation term dominates at high frequency.
    fn precondition(&self, r: &[T]) -> Vec<T> {
        solve_tridiagonal(&self.hessian_model, r)
            .unwrap_or_else(|_| r.iter().zip(self.n).map(|(&x, &n)| x / (self.grid.dx() * n)).collect())
    }

    /// Calibrated semiclassical model of the spectral part plus the exact
    /// quadratic part, which is a parabola in `b`.
    fn surrogate_derivatives(&self, a: &[T], s: &[T], density: &[T], b: T) -> (T, T) {
        let dx = self.grid.dx();
        let (d1, d2) = calibrated_derivatives(s, density, self.n, b, &self.grid);
        let (wp, wm) = self.differences(&self.potential(a));
        let (sp, sm) = self.differences(s);
        let mut lin = T::zero();
        let mut curv = T::zero();
        for i in 0..a.len() {
            lin = lin + self.n[i] * (wp[i] * sp[i] + wm[i] * sm[i]);
            curv = curv + self.n[i] * (sp[i] * sp[i] + sm[i] * sm[i]);
        }
        let c = self.h * dx * T::lit(0.5);
        (d1 + c * (lin + b * curv), d2 + c * curv)
    }
}

/// Density, chemical potential and Poisson potential at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct QddState<T: Real> {
    pub n: DensityField<T>,
    pub a: Vec<T>,
    pub v: Vec<T>,
    pub time: T,
}

impl<T: Real> QddState<T> {
    pub fn mass(&self, grid: &Grid<T>) -> T {
        self.n.mass(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct QddConfig<T: Real> {
    pub h: T,
    pub beta: T,
    pub alpha: T,
    pub nlcg: NlcgOptions<T>,
}

impl<T: Real> QddConfig<T> {
    pub fn new(h: T, beta: T, alpha: T) -> Self {
        Self { h, beta, alpha, nlcg: NlcgOptions::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("h", self.h), ("beta", self.beta), ("alpha", self.alpha)] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.nlcg.tolerance > T::zero()) {
            return Err(Error::Config("NLCG tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct QddSolver<T: Real> {
    grid: Grid<T>,
    config: QddConfig<T>,
    v_ext: Vec<T>,
    h0: Tridiagonal<T>,
    ops: DifferenceOperators<T>,
    last_report: Option<MinimizeReport>,
}

impl<T: Real> QddSolver<T> {
    pub fn new(grid: Grid<T>, v_ext: Vec<T>, config: QddConfig<T>) -> Result<Self> {
        config.validate()?;
        grid.check_len(v_ext.len())?;
        if v_ext.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("external potential".into()));
        }
        let h0 = free_hamiltonian(&grid, config.beta)?;
        let ops = difference_matrices(&grid)?;
        Ok(Self { grid, config, v_ext, h0, ops, last_report: None })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn config(&self) -> &QddConfig<T> {
        &self.config
    }

    pub fn difference_operators(&self) -> &DifferenceOperators<T> {
        &self.ops
    }

    pub fn last_report(&self) -> Option<&MinimizeReport> {
        self.last_report.as_ref()
    }

    /// `W = V[n] + V_ext`.
    pub fn electrostatic_potential(&self, n: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let v = solve_poisson(n, self.config.alpha, &self.grid)?;
        let w = v.iter().zip(&self.v_ext).map(|(&a, &b)| a + b).collect();
        Ok((v, w))
    }

    /// Initial state: the chemical potential whose Gibbs density is `n0`.
    pub fn initial_state(&self, n0: &DensityField<T>) -> Result<QddState<T>> {
        let f = DensityFunctional::new(n0, self.config.beta, self.grid)?;
        let guess = semiclassical_guess(n0, self.config.beta)?;
        let (ev, _) = minimize(&f, guess, &self.config.nlcg)?;
        let (v, _) = self.electrostatic_potential(n0)?;
        Ok(QddState { n: n0.clone(), a: ev.a, v, time: T::zero() })
    }

    /// `A^{k+1} = argmin J_QDD`, warm-started from `A^k`.
    pub fn step(&mut self, state: &QddState<T>) -> Result<QddState<T>> {
        let (v, w) = self.electrostatic_potential(&state.n)?;
        let f = QddFunctional::new(self.grid, &self.h0, &self.ops, self.config.beta, &state.n, &w, self.config.h)?;
        let (ev, report) = minimize(&f, state.a.clone(), &self.config.nlcg)?;
        self.last_report = Some(report);
        Ok(QddState { n: DensityField::from_raw(ev.spectrum.density), a: ev.a, v, time: state.time + self.config.h })
    }

    /// Residual of the discrete equation for the pair `(before, after)`.
    pub fn scheme_residual(&self, before: &QddState<T>, after: &QddState<T>) -> Result<Vec<T>> {
        let (_, w) = self.electrostatic_potential(&before.n)?;
        let u: Vec<T> = after.a.iter().zip(&w).map(|(&a, &b)| a + b).collect();
        let fp: Vec<T> = before.n.iter().zip(self.ops.forward.apply(&u)).map(|(&n, p)| n * p).collect();
        let fm: Vec<T> = before.n.iter().zip(self.ops.backward.apply(&u)).map(|(&n, m)| n * m).collect();
        let tp = self.ops.backward_tilde.apply(&fp);
        let tm = self.ops.forward_tilde.apply(&fm);
        let h = self.config.h;
        let half = T::lit(0.5);
        Ok((0..u.len()).map(|i| (after.n[i] - before.n[i]) / h + half * tp[i] + half * tm[i]).collect())
    }

    /// `-Tr exp(-(H0 + A)) - <A, n> - <V_ext + V/2, n>`; reported along
    /// trajectories as a diagnostic.
    pub fn free_energy(&self, state: &QddState<T>) -> T {
        let dx = self.grid.dx();
        let half = T::lit(0.5);
        let mass = state.n.mass(&self.grid);
        let s: T = (0..state.n.len())
            .map(|i| state.n[i] * (state.a[i] + self.v_ext[i] + half * state.v[i]))
            .sum();
        -mass - dx * s
    }

    fn snapshot(&self, step: usize, state: &QddState<T>) -> Snapshot<T> {
        Snapshot {
            step,
            time: state.time,
            density: state.n.clone(),
            trace: state.n.mass(&self.grid),
            discarded_mass: T::zero(),
            chemical_potential: Some(state.a.clone()),
            poisson_potential: Some(state.v.clone()),
        }
    }

    /// Integrates `round(final_time / h)` steps from `n0`, with a snapshot every
    /// `stride` steps and at the end.
    pub fn run(
        &mut self,
        n0: &DensityField<T>,
        final_time: T,
        stride: usize,
        mut observer: impl FnMut(&Snapshot<T>),
    ) -> Result<Run<T, QddState<T>>> {
        if stride == 0 {
            return Err(Error::Config("snapshot stride must be at least one step".into()));
        }
        let steps = step_count(final_time, self.config.h);
        let mut state = self.initial_state(n0)?;
        let mut snapshots = Vec::new();
        let first = self.snapshot(0, &state);
        observer(&first);
        snapshots.push(first);
        for k in 1..=steps {
            match self.step(&state) {
                Ok(mut next) => {
                    // time as k h rather than an accumulated sum
                    next.time = self.config.h * T::from_usize_lossy(k);
                    state = next;
                }
                Err(e) => {
                    log::error!("QDD step {k} failed: {e}");
                    let time = (self.config.h * T::from_usize_lossy(k)).to_f64_lossy();
                    let final_time = state.time;
                    return Ok(Run {
                        snapshots,
                        final_state: state,
                        steps_completed: k - 1,
                        final_time,
                        failure: Some(e.at_step(k, time)),
                    });
                }
            }
            if k % stride == 0 || k == steps {
                let snap = self.snapshot(k, &state);
                observer(&snap);
                snapshots.push(snap);
            }
        }
        let final_time = state.time;
        Ok(Run { snapshots, final_state: state, steps_completed: steps, final_time, failure: None })
    }
}

/// `J_QDD(A)`.
pub fn eval_j_qdd<T: Real>(a: &[T], n: &DensityField<T>, w: &[T], h: T, beta: T, grid: &Grid<T>) -> Result<T> {
    let h0 = free_hamiltonian(grid, beta)?;
    let ops = difference_matrices(grid)?;
    let f = QddFunctional::new(*grid, &h0, &ops, beta, n, w, h)?;
    grid.check_len(a.len())?;
    let spectrum = GibbsSpectrum::compute(&h0, a, grid, T::infinity())?;
    let value = f.quadratic(a) + spectrum.trace + grid.dx() * dot(a, n);
    if !value.is_finite() {
        return Err(Error::NonFiniteFunctional { max_abs_a: crate::scalar::max_abs(a).to_f64_lossy() });
    }
    Ok(value)
}

/// Euclidean gradient of `J_QDD`.
pub fn grad_j_qdd<T: Real>(a: &[T], n: &DensityField<T>, w: &[T], h: T, beta: T, grid: &Grid<T>) -> Result<Vec<T>> {
    let h0 = free_hamiltonian(grid, beta)?;
    let ops = difference_matrices(grid)?;
    let f = QddFunctional::new(*grid, &h0, &ops, beta, n, w, h)?;
    grid.check_len(a.len())?;
    let spectrum = GibbsSpectrum::compute(&h0, a, grid, T::infinity())?;
    Ok(f.value_and_gradient(a, &spectrum).1)
}
