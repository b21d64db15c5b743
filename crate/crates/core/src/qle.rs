//! Strang splitting for the scaled quantum Liouville-BGK + Poisson system.
//!
//! One step of size `h` is `U(h/2) W(h) U(h/2)`, where `W` relaxes towards the
//! quantum Maxwellian with the same local density and `U` is the
//! Schrodinger-Poisson transport. `U(t)` is itself split as
//! `K(t/2) S(t) K(t/2)`: a Crank-Nicolson step of the kinetic plus external
//! Hamiltonian `H_L = (-beta^2 Lap_Neu - V_ext) / (sqrt(2) beta eps)` and a
//! pointwise phase from the Poisson potential frozen at the density after
//! the first kinetic step.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{EquilibriumSolver, MinimizeReport, NlcgOptions};
use crate::error::{Error, Result};
use crate::grid::{neumann_laplacian, solve_poisson, Grid, Tridiagonal};
use crate::linalg::{ComplexTridiagonal, ComplexTridiagonalLu};
use crate::scalar::Real;
use crate::state::DensityOperator;
use crate::trajectory::{step_count, Run, Snapshot};

/// Maxwellian modes lighter than this fraction of the truncation threshold are
/// not mixed into the collision output; their mass goes to the ledger.
const BLEND_CUTOFF_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct QleConfig<T: Real> {
    /// Time step.
    pub h: T,
    /// Scaled mean free path.
    pub epsilon: T,
    /// Scaled Planck constant.
    pub beta: T,
    /// Scaled Debye length.
    pub alpha: T,
    pub nlcg: NlcgOptions<T>,
    /// Modes with smaller weight are dropped after every step.
    pub truncation_threshold: T,
    /// Start each equilibrium solve from the linear extrapolation of the two
    /// previous chemical potentials instead of the last one.
    pub extrapolate_potential: bool,
}

impl<T: Real> QleConfig<T> {
    pub fn new(h: T, epsilon: T, beta: T, alpha: T) -> Self {
        Self {
            h,
            epsilon,
            beta,
            alpha,
            nlcg: NlcgOptions::default(),
            truncation_threshold: T::lit(1e-7),
            extrapolate_potential: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("h", self.h), ("epsilon", self.epsilon), ("beta", self.beta), ("alpha", self.alpha)];
        for (name, v) in positive {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.truncation_threshold >= T::zero()) {
            return Err(Error::Config("truncation threshold must be non-negative".into()));
        }
        if !(self.nlcg.tolerance > T::zero()) {
            return Err(Error::Config("NLCG tolerance must be positive".into()));
        }
        Ok(())
    }

    /// `sqrt(2) beta eps`, the time scale of the transport generator.
    pub fn transport_scale(&self) -> T {
        T::lit(2.0).sqrt() * self.beta * self.epsilon
    }
}

/// `(iI - (t/2) H_L)^{-1} (iI + (t/2) H_L)`, kept as a factored tridiagonal.
#[derive(Debug, Clone)]
struct Cayley<T: Real> {
    duration: T,
    explicit: ComplexTridiagonal<T>,
    implicit: ComplexTridiagonalLu<T>,
}

impl<T: Real> Cayley<T> {
    fn new(h_l: &Tridiagonal<T>, duration: T) -> Result<Self> {
        let i = Complex::new(T::zero(), T::one());
        let half = Complex::new(duration * T::lit(0.5), T::zero());
        let explicit = ComplexTridiagonal::from_real(h_l, i, half);
        let implicit = ComplexTridiagonal::from_real(h_l, i, -half).factor()?;
        Ok(Self { duration, explicit, implicit })
    }

    fn apply(&self, mode: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut out = self.explicit.apply(mode);
        self.implicit.solve_in_place(&mut out);
        out
    }
}

/// Integrator state: the operators for one external potential, the
/// Crank-Nicolson factorizations built so far and the chemical potentials of
/// the latest collision steps (warm starts).
#[derive(Debug, Clone)]
pub struct QleSolver<T: Real> {
    grid: Grid<T>,
    config: QleConfig<T>,
    v_ext: Vec<T>,
    h_l: Tridiagonal<T>,
    equilibrium: EquilibriumSolver<T>,
    cayley: Vec<Cayley<T>>,
    potentials: Vec<Vec<T>>,
    last_report: Option<MinimizeReport>,
}

impl<T: Real> QleSolver<T> {
    pub fn new(grid: Grid<T>, v_ext: Vec<T>, config: QleConfig<T>) -> Result<Self> {
        config.validate()?;
        grid.check_len(v_ext.len())?;
        if v_ext.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("external potential".into()));
        }
        let beta2 = config.beta * config.beta;
        let inv = T::one() / config.transport_scale();
        let lap = neumann_laplacian(&grid)?;
        let neg_v: Vec<T> = v_ext.iter().map(|&v| -v).collect();
        let h_l = lap.scaled(-beta2).with_diagonal_added(&neg_v).scaled(inv);
        let equilibrium = EquilibriumSolver::new(grid, config.beta, config.nlcg);
        Ok(Self { grid, config, v_ext, h_l, equilibrium, cayley: Vec::new(), potentials: Vec::new(), last_report: None })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn config(&self) -> &QleConfig<T> {
        &self.config
    }

    pub fn external_potential(&self) -> &[T] {
        &self.v_ext
    }

    /// The transport generator `H_L`.
    pub fn transport_hamiltonian(&self) -> &Tridiagonal<T> {
        &self.h_l
    }

    /// Report of the most recent equilibrium solve.
    pub fn last_equilibrium_report(&self) -> Option<&MinimizeReport> {
        self.last_report.as_ref()
    }

    /// Forgets the warm-start history of the collision step.
    pub fn reset_warm_start(&mut self) {
        self.potentials.clear();
    }

    fn cayley(&mut self, duration: T) -> Result<&Cayley<T>> {
        let pos = match self.cayley.iter().position(|c| c.duration == duration) {
            Some(p) => p,
            None => {
                self.cayley.push(Cayley::new(&self.h_l, duration)?);
                self.cayley.len() - 1
            }
        };
        Ok(&self.cayley[pos])
    }

    /// Crank-Nicolson propagation of every mode over `t`; weights unchanged.
    pub fn kinetic_half_step(&mut self, rho: &DensityOperator<T>, t: T) -> Result<DensityOperator<T>> {
        if t == T::zero() {
            return Ok(rho.clone());
        }
        let cayley = self.cayley(t)?;
        rho.map_modes(|m| Ok(cayley.apply(m)))
    }

    /// Multiplies every mode by `exp(i t V / (sqrt(2) beta eps))` with
    /// `alpha^2 Lap_Dir V = n[rho]`.
    pub fn poisson_phase_step(&self, rho: &DensityOperator<T>, t: T) -> Result<DensityOperator<T>> {
        if t == T::zero() {
            return Ok(rho.clone());
        }
        let v = solve_poisson(&rho.local_density(), self.config.alpha, &self.grid)?;
        self.phase_step_with(rho, t, &v)
    }

    /// Phase step for a prescribed potential.
    pub fn phase_step_with(&self, rho: &DensityOperator<T>, t: T, v: &[T]) -> Result<DensityOperator<T>> {
        self.grid.check_len(v.len())?;
        let k = t / self.config.transport_scale();
        let phases: Vec<Complex<T>> = v.iter().map(|&vj| Complex::from_polar(T::one(), k * vj)).collect();
        rho.map_modes(|m| Ok(m.iter().zip(&phases).map(|(z, p)| *z * *p).collect()))
    }

    /// `K(t/2) S(t) K(t/2)`.
    pub fn transport_step(&mut self, rho: &DensityOperator<T>, t: T) -> Result<DensityOperator<T>> {
        let half = t * T::lit(0.5);
        let r = self.kinetic_half_step(rho, half)?;
        let r = self.poisson_phase_step(&r, t)?;
        self.kinetic_half_step(&r, half)
    }

    /// Exact solution of `d rho/dt = (rho_e[n] - rho) / eps^2` over `t`; the
    /// Maxwellian is frozen since the flow preserves the local density.
    pub fn collision_step(&mut self, rho: &DensityOperator<T>, t: T) -> Result<DensityOperator<T>> {
        if t == T::zero() {
            return Ok(rho.clone());
        }
        let n = rho.local_density();
        n.require_positive()?;
        let start = self.warm_start();
        let eq = self.equilibrium.solve(&n, start.as_deref())?;
        let rho_e = eq.operator(self.grid)?;
        self.potentials.push(eq.chemical_potential);
        if self.potentials.len() > 2 {
            self.potentials.remove(0);
        }
        self.last_report = Some(eq.report);
        let eps2 = self.config.epsilon * self.config.epsilon;
        let keep = (-t / eps2).exp();
        let cutoff = self.config.truncation_threshold * T::lit(BLEND_CUTOFF_FRACTION);
        rho.blend(keep, &rho_e, T::one() - keep, cutoff)
    }

    fn warm_start(&self) -> Option<Vec<T>> {
        match self.potentials.as_slice() {
            [] => None,
            [a] => Some(a.clone()),
            [.., a, b] if self.config.extrapolate_potential => {
                Some(a.iter().zip(b).map(|(&x, &y)| y + y - x).collect())
            }
            [.., b] => Some(b.clone()),
        }
    }

    /// `U(h/2) W(h) U(h/2)` followed by truncation.
    pub fn step(&mut self, rho: &DensityOperator<T>) -> Result<DensityOperator<T>> {
        let h = self.config.h;
        let half = h * T::lit(0.5);
        let r = self.transport_step(rho, half)?;
        let r = self.collision_step(&r, h)?;
        let r = self.transport_step(&r, half)?;
        Ok(r.truncate(self.config.truncation_threshold))
    }

    /// Integrates up to `round(final_time / h)` steps, emitting a snapshot every
    /// `stride` steps (and at the end). The observer sees every snapshot as
    /// it is taken.
    pub fn run(
        &mut self,
        rho0: &DensityOperator<T>,
        final_time: T,
        stride: usize,
        mut observer: impl FnMut(&Snapshot<T>),
    ) -> Result<Run<T, DensityOperator<T>>> {
        if rho0.grid() != &self.grid {
            return Err(Error::LengthMismatch { expected: self.grid.len(), got: rho0.grid().len() });
        }
        if stride == 0 {
            return Err(Error::Config("snapshot stride must be at least one step".into()));
        }
        let steps = step_count(final_time, self.config.h);
        let h = self.config.h;
        let mut snapshots = Vec::new();
        let mut emit = |k: usize, rho: &DensityOperator<T>, snapshots: &mut Vec<Snapshot<T>>| {
            let snap = Snapshot {
                step: k,
                time: h * T::from_usize_lossy(k),
                density: rho.local_density(),
                trace: rho.trace(),
                discarded_mass: rho.discarded_mass(),
                chemical_potential: None,
                poisson_potential: None,
            };
            observer(&snap);
            snapshots.push(snap);
        };
        emit(0, rho0, &mut snapshots);
        let mut rho = rho0.clone();
        for k in 1..=steps {
            match self.step(&rho) {
                Ok(next) => rho = next,
                Err(e) => {
                    let time = h * T::from_usize_lossy(k);
                    log::error!("QLE step {k} failed: {e}");
                    return Ok(Run {
                        snapshots,
                        final_state: rho,
                        steps_completed: k - 1,
                        final_time: h * T::from_usize_lossy(k - 1),
                        failure: Some(e.at_step(k, time.to_f64_lossy())),
                    });
                }
            }
            if k % stride == 0 || k == steps {
                emit(k, &rho, &mut snapshots);
            }
        }
        Ok(Run { snapshots, final_state: rho, steps_completed: steps, final_time: h * T::from_usize_lossy(steps), failure: None })
    }
}

/// One outer step, for callers that do not keep a solver around.
pub fn qle_step<T: Real>(rho: &DensityOperator<T>, v_ext: &[T], config: &QleConfig<T>) -> Result<DensityOperator<T>> {
    QleSolver::new(*rho.grid(), v_ext.to_vec(), *config)?.step(rho)
}
