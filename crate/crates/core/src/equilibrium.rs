//! Quantum Maxwellian `exp(-(H0 + A))` with prescribed local density.
//!
//! The chemical potential `A` is the unique minimizer of the strictly convex
//! functional
//!
//! ```text
//! J(A) = sum_p exp(-lambda_p[A]) + <A, n>,      lambda_p[A] = eig(H0 + diag(A)),
//! ```
//!
//! whose gradient in the grid inner product is `n - n[exp(-(H0 + A))]`. It is
//! minimized with Polak-Ribiere nonlinear conjugate gradients. Each line
//! search is warm-started by Newton's method on the semiclassical surrogate
//! `n[exp(-(H0 + A))] ~ exp(-A) / (sqrt(4 pi) beta)` and finished by a
//! safeguarded secant iteration on the exact directional derivative.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{neumann_laplacian, DensityField, Grid, Tridiagonal};
use crate::linalg::eig_sym_tridiag_window;
use crate::scalar::{dot, max_abs, norm2, Real};
use crate::state::DensityOperator;

/// Eigenvalues below this are clamped before exponentiation.
const EXPONENT_FLOOR: f64 = -700.0;

/// `H0 = -beta^2 Lap_Neu`.
pub fn free_hamiltonian<T: Real>(grid: &Grid<T>, beta: T) -> Result<Tridiagonal<T>> {
    Ok(neumann_laplacian(grid)?.scaled(-beta * beta))
}

/// `sqrt(4 pi) beta`, the semiclassical density of `exp(-H0)` is its inverse.
fn semiclassical_scale<T: Real>(beta: T) -> T {
    (T::lit(4.0) * T::PI()).sqrt() * beta
}

/// Spectral data of `exp(-(H0 + A))`.
#[derive(Debug, Clone)]
pub struct GibbsSpectrum<T: Real> {
    /// All eigenvalues of `H0 + A`, ascending.
    pub eigenvalues: Vec<T>,
    /// Eigenvectors of the leading eigenvalues (grid-normalized).
    pub modes: Vec<Vec<T>>,
    /// `exp(-lambda_p)` for the modes that carry a vector.
    pub weights: Vec<T>,
    /// `sum_p exp(-lambda_p) |psi_p|^2`.
    pub density: Vec<T>,
    /// `sum_p exp(-lambda_p)` over the whole spectrum.
    pub trace: T,
    /// Number of eigenvalues that hit the exponent floor.
    pub clamped: usize,
}

impl<T: Real> GibbsSpectrum<T> {
    /// Eigenvectors are computed for eigenvalues up to `lambda_min + window`;
    /// beyond that `exp(-lambda)` is negligible in double precision.
    pub fn compute(h0: &Tridiagonal<T>, a: &[T], grid: &Grid<T>, window: T) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFunctional { max_abs_a: max_abs(a).to_f64_lossy() });
        }
        let h = h0.with_diagonal_added(a);
        let dec = eig_sym_tridiag_window(&h, grid, window)?;
        let floor = T::lit(EXPONENT_FLOOR);
        let mut clamped = 0;
        let boltzmann = |l: T, clamped: &mut usize| {
            if l < floor {
                *clamped += 1;
                (-floor).exp()
            } else {
                (-l).exp()
            }
        };
        let trace: T = dec.eigenvalues.iter().map(|&l| boltzmann(l, &mut clamped)).sum();
        let mut dummy = 0;
        let weights: Vec<T> =
            dec.eigenvalues[..dec.vectors.len()].iter().map(|&l| boltzmann(l, &mut dummy)).collect();
        if clamped > 0 {
            log::warn!("{clamped} eigenvalues of H0 + A fell below {EXPONENT_FLOOR} and were clamped");
        }
        let mut density = vec![T::zero(); grid.len()];
        for (w, v) in weights.iter().zip(&dec.vectors) {
            for (d, x) in density.iter_mut().zip(v) {
                *d = *d + *w * *x * *x;
            }
        }
        if !trace.is_finite() {
            return Err(Error::NonFiniteFunctional { max_abs_a: max_abs(a).to_f64_lossy() });
        }
        Ok(Self { eigenvalues: dec.eigenvalues, modes: dec.vectors, weights, density, trace, clamped })
    }

    /// The Maxwellian as a density operator.
    pub fn to_operator(&self, grid: Grid<T>) -> Result<DensityOperator<T>> {
        DensityOperator::from_real_spectrum(grid, self.weights.clone(), self.modes.clone())
    }
}

/// A strictly convex functional of the chemical potential whose spectral part
/// is `sum_p exp(-lambda_p[A])` and whose linear part is `dx sum n_i A_i`.
///
/// Gradients are Euclidean (partial derivatives with respect to `A_i`).
/// Fit of the free Boltzmann density response `chi(k) / chi(0)` by
/// `1 / (1 + c (beta k)^2)`; any `c` in `[0.25, 0.5]` keeps the ratio within
/// a factor two at all frequencies.
const RESPONSE_DECAY: f64 = 0.35;

pub trait Functional<T: Real> {
    fn grid(&self) -> &Grid<T>;
    fn hamiltonian(&self) -> &Tridiagonal<T>;
    fn beta(&self) -> T;
    /// Target density entering the linear term.
    fn target(&self) -> &[T];

    /// Value and Euclidean gradient at `a`, given the Gibbs spectrum there.
    fn value_and_gradient(&self, a: &[T], spectrum: &GibbsSpectrum<T>) -> (T, Vec<T>);

    /// First and second derivative in `b` of a model of `b -> J(a + b s)`
    /// used to start the line search. `density` is the exact Gibbs density at
    /// `a`; the model moves it by the local semiclassical response
    /// `n[a + b s] ~ n[a] exp(-b s)`.
    fn surrogate_derivatives(&self, _a: &[T], s: &[T], density: &[T], b: T) -> (T, T) {
        calibrated_derivatives(s, density, self.target(), b, self.grid())
    }

    /// Approximate inverse Hessian applied to `r`. The density response to
    /// `A` is roughly `n` at low frequency and falls off like `1 / (beta k)^2`
    /// beyond, so this is `N^{-1/2} (I + c H0) N^{-1/2} / dx`.
    fn precondition(&self, r: &[T]) -> Vec<T> {
        let dx = self.grid().dx();
        let scaled: Vec<T> = r.iter().zip(self.target()).map(|(&ri, &ni)| ri / ni.sqrt()).collect();
        let smooth = self.hamiltonian().apply(&scaled);
        let c = T::lit(RESPONSE_DECAY);
        scaled.iter().zip(&smooth).zip(self.target()).map(|((&x, &hx), &ni)| (x + c * hx) / (dx * ni.sqrt())).collect()
    }

    /// `dx sum n`; at the minimizer `Tr exp(-(H0 + A))` equals this.
    fn mass(&self) -> T {
        self.grid().integrate(self.target())
    }
}

pub(crate) fn calibrated_derivatives<T: Real>(s: &[T], density: &[T], n: &[T], b: T, grid: &Grid<T>) -> (T, T) {
    let cap = -T::lit(EXPONENT_FLOOR);
    let mut d1 = T::zero();
    let mut d2 = T::zero();
    for (&si, &ri) in s.iter().zip(density) {
        let e = ri * (-(b * si)).min(cap).exp();
        d1 = d1 - si * e;
        d2 = d2 + si * si * e;
    }
    let dx = grid.dx();
    (dx * (d1 + dot(s, n)), dx * d2)
}

fn semiclassical_derivatives<T: Real>(a: &[T], s: &[T], n: &[T], b: T, beta: T, grid: &Grid<T>) -> (T, T) {
    let dx = grid.dx();
    let pref = dx / semiclassical_scale(beta);
    let cap = -T::lit(EXPONENT_FLOOR);
    let mut d1 = T::zero();
    let mut d2 = T::zero();
    for (&ai, &si) in a.iter().zip(s) {
        let e = (-(ai + b * si)).min(cap).exp();
        d1 = d1 - si * e;
        d2 = d2 + si * si * e;
    }
    (pref * d1 + dx * dot(s, n), pref * d2)
}

/// Evaluated point of a functional.
#[derive(Debug, Clone)]
pub struct Evaluation<T: Real> {
    pub a: Vec<T>,
    pub value: T,
    pub gradient: Vec<T>,
    pub spectrum: GibbsSpectrum<T>,
}

fn evaluate<T: Real, F: Functional<T>>(f: &F, a: Vec<T>, window: T) -> Result<Evaluation<T>> {
    let spectrum = GibbsSpectrum::compute(f.hamiltonian(), &a, f.grid(), window)?;
    let (value, gradient) = f.value_and_gradient(&a, &spectrum);
    if !value.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteFunctional { max_abs_a: max_abs(&a).to_f64_lossy() });
    }
    Ok(Evaluation { a, value, gradient, spectrum })
}

/// `J(A) = sum exp(-lambda_p[A]) + <A, n>`.
#[derive(Debug, Clone)]
pub struct DensityFunctional<T: Real> {
    grid: Grid<T>,
    h0: Tridiagonal<T>,
    beta: T,
    n: Vec<T>,
}

impl<T: Real> DensityFunctional<T> {
    pub fn new(n: &DensityField<T>, beta: T, grid: Grid<T>) -> Result<Self> {
        grid.check_len(n.len())?;
        n.require_positive()?;
        if !(beta > T::zero()) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { grid, h0: free_hamiltonian(&grid, beta)?, beta, n: n.to_vec() })
    }
}

impl<T: Real> Functional<T> for DensityFunctional<T> {
    fn grid(&self) -> &Grid<T> {
        &self.grid
    }
    fn hamiltonian(&self) -> &Tridiagonal<T> {
        &self.h0
    }
    fn beta(&self) -> T {
        self.beta
    }
    fn target(&self) -> &[T] {
        &self.n
    }
    fn value_and_gradient(&self, a: &[T], spectrum: &GibbsSpectrum<T>) -> (T, Vec<T>) {
        let dx = self.grid.dx();
        let value = spectrum.trace + dx * dot(a, &self.n);
        let gradient = self.n.iter().zip(&spectrum.density).map(|(&n, &ne)| dx * (n - ne)).collect();
        (value, gradient)
    }
}

/// Knobs of the conjugate gradient minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NlcgOptions<T: Real> {
    /// Stop once `|A^k - A^{k-1}| / |A^k| <= tolerance`.
    pub tolerance: T,
    pub max_iterations: usize,
    /// The secant iteration stops once `|g(b)| <= line_search_tolerance * |g(0)|`.
    pub line_search_tolerance: T,
    pub line_search_max_iterations: usize,
    /// Use the semiclassical surrogate for the first trial step.
    pub surrogate_warm_start: bool,
    /// Eigenvectors are computed within this distance of the lowest eigenvalue.
    pub spectral_window: T,
    /// Precondition the gradient with [`Functional::precondition`].
    pub preconditioned: bool,
}

impl<T: Real> Default for NlcgOptions<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-7),
            max_iterations: 500,
            line_search_tolerance: T::lit(0.1),
            line_search_max_iterations: 50,
            surrogate_warm_start: true,
            spectral_window: T::lit(30.0),
            preconditioned: true,
        }
    }
}

impl<T: Real> NlcgOptions<T> {
    pub fn with_tolerance(mut self, tolerance: T) -> Self {
        self.tolerance = tolerance;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// The relative step fell below the tolerance.
    RelativeStep,
    /// The gradient vanished to working precision.
    ZeroGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub gradient_norm: f64,
    pub step: f64,
    pub relative_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeReport {
    pub iterations: usize,
    pub final_relative_step: f64,
    /// Exact functional evaluations spent inside line searches.
    pub line_search_calls: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub stop_reason: Option<StopReason>,
    pub history: Vec<IterationRecord>,
}

impl MinimizeReport {
    /// CSV trace: `iteration,value,gradient_norm,step,relative_step`.
    pub fn write_trace_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iteration,value,gradient_norm,step,relative_step")?;
        for r in &self.history {
            writeln!(out, "{},{:.17e},{:.17e},{:.17e},{:.17e}", r.iteration, r.value, r.gradient_norm, r.step, r.relative_step)?;
        }
        Ok(())
    }
}

/// Minimizer of a one-dimensional convex function from its derivative, by a
/// secant iteration started at `(0, g0)` and `b1`, safeguarded by a bracket
/// that is expanded until the derivative changes sign and bisected whenever
/// the secant step leaves it.
///
/// `g` returns the derivative together with any payload the caller wants to
/// keep from the last evaluation.
pub fn secant_root<T: Real, P>(
    mut g: impl FnMut(T) -> Result<(T, P)>,
    g0: T,
    b1: T,
    tolerance: T,
    max_iterations: usize,
) -> Result<(T, P, usize)> {
    if !(g0 < T::zero()) {
        return Err(Error::LineSearch(format!("not a descent direction (g(0) = {g0:e})")));
    }
    let threshold = tolerance * g0.abs();
    let mut lo = T::zero();
    let mut hi: Option<T> = None;
    let mut prev = (T::zero(), g0);
    let mut b = if b1 > T::zero() && b1.is_finite() { b1 } else { T::one() };
    let mut calls = 0;
    let mut best: Option<(T, T, P)> = None;
    loop {
        let (gb, payload) = g(b)?;
        calls += 1;
        if !gb.is_finite() {
            // step overshot into overflow: pull back towards the bracket
            hi = Some(b);
            b = (lo + b) * T::lit(0.5);
            if calls >= max_iterations {
                break;
            }
            continue;
        }
        if gb < T::zero() {
            lo = lo.max(b);
        } else {
            hi = Some(hi.map_or(b, |h| h.min(b)));
        }
        let better = best.as_ref().map_or(true, |(_, bg, _)| gb.abs() < bg.abs());
        let converged = gb.abs() <= threshold;
        if better {
            best = Some((b, gb, payload));
        }
        if converged {
            break;
        }
        if calls >= max_iterations {
            break;
        }
        let slope = (gb - prev.1) / (b - prev.0);
        let mut next = if slope > T::zero() && slope.is_finite() { b - gb / slope } else { T::nan() };
        match hi {
            None => {
                let limit = T::lit(8.0) * lo.max(b);
                if !(next.is_finite() && next > lo && next <= limit) {
                    next = T::lit(2.0) * lo.max(b);
                }
            }
            Some(h) => {
                if !(next.is_finite() && next > lo && next < h) {
                    next = (lo + h) * T::lit(0.5);
                }
            }
        }
        prev = (b, gb);
        b = next;
    }
    match best {
        Some((b, gb, payload)) if gb.abs() <= threshold || calls < max_iterations => Ok((b, payload, calls)),
        Some((b, gb, payload)) => {
            // accept the best point if it decreased the slope substantially
            if gb.abs() < g0.abs() {
                log::debug!("line search hit its iteration cap with |g| = {gb:e}");
                Ok((b, payload, calls))
            } else {
                Err(Error::LineSearch(format!("no progress after {calls} evaluations (b = {b:e}, g = {gb:e})")))
            }
        }
        None => Err(Error::LineSearch(format!("no finite evaluation in {calls} attempts"))),
    }
}

/// Minimizer of a strictly convex one-dimensional function by safeguarded
/// Newton iteration from `b = 0`, given `(g, g')`.
fn newton_root<T: Real>(mut g: impl FnMut(T) -> (T, T), max_iterations: usize) -> Option<T> {
    let mut b = T::zero();
    let mut lo: Option<T> = None;
    let mut hi: Option<T> = None;
    for _ in 0..max_iterations {
        let (d1, d2) = g(b);
        if !d1.is_finite() || !d2.is_finite() {
            return None;
        }
        if d1 < T::zero() {
            lo = Some(b);
        } else {
            hi = Some(b);
        }
        let mut next = if d2 > T::zero() { b - d1 / d2 } else { T::nan() };
        let inside = match (lo, hi) {
            (Some(l), Some(h)) => next > l && next < h,
            _ => next.is_finite(),
        };
        if !inside {
            next = match (lo, hi) {
                (Some(l), Some(h)) => (l + h) * T::lit(0.5),
                _ => return None,
            };
        }
        if (next - b).abs() <= T::lit(1e-12) * (T::one() + b.abs()) {
            return Some(next);
        }
        b = next;
    }
    Some(b)
}

/// Exact line search along `s` from the evaluated point `at`.
fn line_search_from<T: Real, F: Functional<T>>(
    f: &F,
    at: &Evaluation<T>,
    s: &[T],
    options: &NlcgOptions<T>,
) -> Result<(T, Evaluation<T>, usize)> {
    let g0 = dot(s, &at.gradient);
    let b1 = if options.surrogate_warm_start {
        newton_root(|b| f.surrogate_derivatives(&at.a, s, &at.spectrum.density, b), 50).filter(|b| *b > T::zero())
    } else {
        None
    }
    .unwrap_or_else(|| T::one() / max_abs(s).max(T::min_positive_value()));
    let window = options.spectral_window;
    let (b, ev, calls) = secant_root(
        |b| {
            let trial: Vec<T> = at.a.iter().zip(s).map(|(&x, &d)| x + b * d).collect();
            match evaluate(f, trial, window) {
                Ok(ev) => Ok((dot(s, &ev.gradient), Some(ev))),
                Err(Error::NonFiniteFunctional { .. }) => Ok((T::nan(), None)),
                Err(e) => Err(e),
            }
        },
        g0,
        b1,
        options.line_search_tolerance,
        options.line_search_max_iterations,
    )?;
    let ev = ev.ok_or_else(|| Error::LineSearch("best point was not finite".into()))?;
    Ok((b, ev, calls))
}

/// Shifts `a` by the constant that makes `Tr exp(-(H0 + A))` equal the target
/// mass. This is the exact minimizer of the functional along constant
/// directions, since the spectrum shifts rigidly.
fn normalize_mass<T: Real, F: Functional<T>>(f: &F, ev: Evaluation<T>, window: T) -> Result<(Evaluation<T>, bool)> {
    let shift = (ev.spectrum.trace / f.mass()).ln();
    if !shift.is_finite() || shift.abs() <= T::lit(4.0) * T::epsilon() {
        return Ok((ev, false));
    }
    let a = ev.a.iter().map(|&x| x + shift).collect();
    Ok((evaluate(f, a, window)?, true))
}

/// Polak-Ribiere nonlinear conjugate gradient with restarts `c = max(0, c_PR)`,
/// optionally preconditioned.
pub fn minimize<T: Real, F: Functional<T>>(
    f: &F,
    a_init: Vec<T>,
    options: &NlcgOptions<T>,
) -> Result<(Evaluation<T>, MinimizeReport)> {
    f.grid().check_len(a_init.len())?;
    let window = options.spectral_window;
    let mut report = MinimizeReport {
        iterations: 0,
        final_relative_step: f64::INFINITY,
        line_search_calls: 0,
        evaluations: 0,
        converged: false,
        stop_reason: None,
        history: Vec::new(),
    };
    let (mut ev, shifted) = normalize_mass(f, evaluate(f, a_init, window)?, window)?;
    report.evaluations += 1 + usize::from(shifted);

    // below this the gradient is rounding noise of the eigensolver and no
    // line search can make progress
    let grad_floor = T::lit(1e-11) * norm2(f.target()) * f.grid().dx();
    let precondition = |r: &[T]| if options.preconditioned { f.precondition(r) } else { r.to_vec() };
    let mut residual: Vec<T> = ev.gradient.iter().map(|&g| -g).collect();
    let mut z = precondition(&residual);
    let mut direction = z.clone();
    let mut descent_value = ev.value;

    loop {
        let gnorm = norm2(&ev.gradient);
        if gnorm <= grad_floor {
            report.converged = true;
            report.stop_reason = Some(StopReason::ZeroGradient);
            break;
        }
        if report.iterations >= options.max_iterations {
            return Err(Error::NotConverged {
                iterations: report.iterations,
                relative_step: report.final_relative_step,
            });
        }
        let (b, next, calls) = line_search_from(f, &ev, &direction, options)?;
        report.line_search_calls += calls;
        report.evaluations += calls;
        report.iterations += 1;

        let step: Vec<T> = next.a.iter().zip(&ev.a).map(|(&x, &y)| x - y).collect();
        let rel = norm2(&step) / norm2(&next.a).max(T::min_positive_value());
        report.final_relative_step = rel.to_f64_lossy();
        if next.value > descent_value + T::lit(1e-12) * descent_value.abs().max(T::one()) {
            log::debug!("NLCG step {} increased J by {:e}", report.iterations, next.value - descent_value);
        }
        descent_value = next.value;
        report.history.push(IterationRecord {
            iteration: report.iterations,
            value: next.value.to_f64_lossy(),
            gradient_norm: norm2(&next.gradient).to_f64_lossy(),
            step: b.to_f64_lossy(),
            relative_step: rel.to_f64_lossy(),
        });
        ev = next;
        if rel <= options.tolerance {
            report.converged = true;
            report.stop_reason = Some(StopReason::RelativeStep);
            break;
        }

        let new_residual: Vec<T> = ev.gradient.iter().map(|&g| -g).collect();
        let new_z = precondition(&new_residual);
        let denom = dot(&z, &residual);
        let c_pr = if denom > T::zero() {
            new_z.iter().zip(new_residual.iter().zip(&residual)).map(|(&zn, (&rn, &r))| zn * (rn - r)).sum::<T>() / denom
        } else {
            T::zero()
        };
        let c = c_pr.max(T::zero());
        direction = new_z.iter().zip(&direction).map(|(&d, &s)| d + c * s).collect();
        if dot(&direction, &ev.gradient) >= T::zero() {
            direction = new_z.clone();
        }
        residual = new_residual;
        z = new_z;
    }

    let (ev, shifted) = normalize_mass(f, ev, window)?;
    report.evaluations += usize::from(shifted);
    Ok((ev, report))
}

/// Computes quantum Maxwellians for a fixed `beta` and grid.
#[derive(Debug, Clone)]
pub struct EquilibriumSolver<T: Real> {
    grid: Grid<T>,
    beta: T,
    options: NlcgOptions<T>,
}

/// Result of [`EquilibriumSolver::solve`].
#[derive(Debug, Clone)]
pub struct Equilibrium<T: Real> {
    pub chemical_potential: Vec<T>,
    pub spectrum: GibbsSpectrum<T>,
    pub report: MinimizeReport,
}

impl<T: Real> Equilibrium<T> {
    pub fn operator(&self, grid: Grid<T>) -> Result<DensityOperator<T>> {
        self.spectrum.to_operator(grid)
    }
}

impl<T: Real> EquilibriumSolver<T> {
    pub fn new(grid: Grid<T>, beta: T, options: NlcgOptions<T>) -> Self {
        Self { grid, beta, options }
    }

    pub fn options(&self) -> &NlcgOptions<T> {
        &self.options
    }

    /// Chemical potential and Gibbs spectrum for the density `n`. Without a
    /// warm start the semiclassical guess is used.
    pub fn solve(&self, n: &DensityField<T>, a_init: Option<&[T]>) -> Result<Equilibrium<T>> {
        let f = DensityFunctional::new(n, self.beta, self.grid)?;
        let start = match a_init {
            Some(a) => a.to_vec(),
            None => semiclassical_guess(n, self.beta)?,
        };
        let (ev, report) = minimize(&f, start, &self.options)?;
        Ok(Equilibrium { chemical_potential: ev.a, spectrum: ev.spectrum, report })
    }
}

/// `J(A)` for the target density `n`.
pub fn eval_j<T: Real>(a: &[T], n: &DensityField<T>, beta: T, grid: &Grid<T>) -> Result<T> {
    let f = DensityFunctional::new(n, beta, *grid)?;
    grid.check_len(a.len())?;
    Ok(evaluate(&f, a.to_vec(), T::infinity())?.value)
}

/// Gradient of `J` in the grid inner product, `n - n[exp(-(H0 + A))]`.
pub fn grad_j<T: Real>(a: &[T], n: &DensityField<T>, beta: T, grid: &Grid<T>) -> Result<Vec<T>> {
    let f = DensityFunctional::new(n, beta, *grid)?;
    grid.check_len(a.len())?;
    let ev = evaluate(&f, a.to_vec(), T::infinity())?;
    let dx = grid.dx();
    Ok(ev.gradient.into_iter().map(|g| g / dx).collect())
}

/// Inverts the semiclassical density law `n = exp(-A) / (sqrt(4 pi) beta)`.
pub fn semiclassical_guess<T: Real>(n: &DensityField<T>, beta: T) -> Result<Vec<T>> {
    n.require_positive()?;
    let scale = semiclassical_scale(beta);
    Ok(n.iter().map(|&v| -(scale * v).ln()).collect())
}

/// Semiclassical surrogate of `b -> J(A + b s)`:
/// `dx / (sqrt(4 pi) beta) * sum exp(-(A_i + b s_i)) + b <s, n>`.
pub fn surrogate_line_value<T: Real>(a: &[T], s: &[T], n: &[T], b: T, beta: T, grid: &Grid<T>) -> T {
    let dx = grid.dx();
    let cap = -T::lit(EXPONENT_FLOOR);
    let sum: T = a.iter().zip(s).map(|(&ai, &si)| (-(ai + b * si)).min(cap).exp()).sum();
    dx / semiclassical_scale(beta) * sum + b * dx * dot(s, n)
}

/// Minimizer of the surrogate along `s`, by Newton's method.
pub fn surrogate_minimizer<T: Real>(a: &[T], s: &[T], n: &[T], beta: T, grid: &Grid<T>) -> Result<T> {
    if max_abs(s) == T::zero() {
        return Err(Error::DegenerateDirection);
    }
    newton_root(|b| semiclassical_derivatives(a, s, n, b, beta, grid), 100)
        .ok_or_else(|| Error::LineSearch("surrogate Newton iteration diverged".into()))
}

/// Exact line search `argmin_b J(A + b s)` (surrogate warm start, secant finish).
/// Returns the step and the number of exact evaluations it took.
pub fn line_search<T: Real>(
    a: &[T],
    s: &[T],
    n: &DensityField<T>,
    beta: T,
    grid: &Grid<T>,
    options: &NlcgOptions<T>,
) -> Result<(T, usize)> {
    if max_abs(s) == T::zero() {
        return Err(Error::DegenerateDirection);
    }
    let f = DensityFunctional::new(n, beta, *grid)?;
    let at = evaluate(&f, a.to_vec(), options.spectral_window)?;
    let g0 = dot(s, &at.gradient);
    if g0 > T::zero() {
        let neg: Vec<T> = s.iter().map(|&x| -x).collect();
        let (b, _, calls) = line_search_from(&f, &at, &neg, options)?;
        return Ok((-b, calls));
    }
    let (b, _, calls) = line_search_from(&f, &at, s, options)?;
    Ok((b, calls))
}

/// Minimizes `J` for the density `n`.
pub fn minimize_j<T: Real>(
    n: &DensityField<T>,
    beta: T,
    grid: &Grid<T>,
    tolerance: T,
    a_init: Option<&[T]>,
) -> Result<(Vec<T>, MinimizeReport)> {
    let solver = EquilibriumSolver::new(*grid, beta, NlcgOptions::default().with_tolerance(tolerance));
    let eq = solver.solve(n, a_init)?;
    Ok((eq.chemical_potential, eq.report))
}

/// The quantum Maxwellian with local density `n`, truncated at `threshold`.
pub fn maxwellian<T: Real>(
    n: &DensityField<T>,
    beta: T,
    grid: &Grid<T>,
    tolerance: T,
    threshold: T,
) -> Result<DensityOperator<T>> {
    let solver = EquilibriumSolver::new(*grid, beta, NlcgOptions::default().with_tolerance(tolerance));
    let eq = solver.solve(n, None)?;
    Ok(eq.operator(*grid)?.truncate(threshold))
}

/// Local density of `exp(-(H0 + A))`, the forward map of the minimization.
pub fn gibbs_density<T: Real>(a: &[T], beta: T, grid: &Grid<T>) -> Result<DensityField<T>> {
    grid.check_len(a.len())?;
    let h0 = free_hamiltonian(grid, beta)?;
    Ok(DensityField::from_raw(GibbsSpectrum::compute(&h0, a, grid, T::lit(50.0))?.density))
}
