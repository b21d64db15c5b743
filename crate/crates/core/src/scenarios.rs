//! External potentials and initial density operators of the three test
//! cases: a switched double-barrier Maxwellian, a non-Maxwellian function of
//! the same Hamiltonian, and localized wave packets.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::equilibrium::free_hamiltonian;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{eig_sym_tridiag, eig_sym_tridiag_window};
use crate::scalar::Real;
use crate::state::DensityOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Maxwellian,
    HamiltonianFunction,
    WavePackets,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [Self::Maxwellian, Self::HamiltonianFunction, Self::WavePackets];

    pub fn name(self) -> &'static str {
        match self {
            Self::Maxwellian => "maxwellian",
            Self::HamiltonianFunction => "hamiltonian-function",
            Self::WavePackets => "wave-packets",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// Geometry of the double barrier: two barriers of width `width` on either
/// side of a well of the same width centered at `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierLayout {
    pub height: f64,
    pub width: f64,
    pub center: f64,
}

impl Default for BarrierLayout {
    fn default() -> Self {
        Self { height: 2.0, width: 0.05, center: 0.5 }
    }
}

/// Double-barrier potential with all jumps moved to cell midpoints.
pub fn double_barrier_potential<T: Real>(grid: &Grid<T>, layout: &BarrierLayout) -> Result<Vec<T>> {
    let width = T::lit(layout.width);
    if width < T::lit(2.0) * grid.dx() {
        return Err(Error::InvalidGrid(format!(
            "barrier width {} is below two cells (dx = {})",
            layout.width,
            grid.dx()
        )));
    }
    let c = T::lit(layout.center);
    let half = T::lit(0.5) * width;
    let edges = [c - half - width, c - half, c + half, c + half + width];
    let idx: Vec<usize> = edges.iter().map(|&x| grid.snap_to_midpoint(x).index).collect();
    let height = T::lit(layout.height);
    let mut v = vec![T::zero(); grid.len()];
    for (i, vi) in v.iter_mut().enumerate() {
        if (idx[0]..idx[1]).contains(&i) || (idx[2]..idx[3]).contains(&i) {
            *vi = height;
        }
    }
    Ok(v)
}

/// `base + slope * x`.
pub fn tilted_potential<T: Real>(base: &[T], slope: T, grid: &Grid<T>) -> Result<Vec<T>> {
    grid.check_len(base.len())?;
    Ok(base.iter().enumerate().map(|(i, &b)| b + slope * grid.node(i)).collect())
}

fn unit_trace<T: Real>(rho: DensityOperator<T>, total: T, threshold: T) -> DensityOperator<T> {
    rho.scaled(T::one() / total).truncate(threshold)
}

/// `exp(-(H0 + V)) / Tr`, truncated.
pub fn ic_maxwellian<T: Real>(grid: &Grid<T>, beta: T, v_ext0: &[T], threshold: T) -> Result<DensityOperator<T>> {
    let h = free_hamiltonian(grid, beta)?.with_diagonal_added(v_ext0);
    // weights below exp(-60) of the largest one are far below any threshold
    let dec = eig_sym_tridiag_window(&h, grid, T::lit(60.0))?;
    let l0 = dec.eigenvalues[0];
    let total: T = dec.eigenvalues.iter().map(|&l| (l0 - l).exp()).sum();
    let weights = dec.eigenvalues[..dec.vectors.len()].iter().map(|&l| (l0 - l).exp()).collect();
    let rho = DensityOperator::from_real_spectrum(*grid, weights, dec.vectors)?;
    Ok(unit_trace(rho, total, threshold))
}

/// `f(H0 + V) / Tr` with `f(x) = 1 / (1 + x^2)`, truncated.
pub fn ic_hamiltonian_function<T: Real>(
    grid: &Grid<T>,
    beta: T,
    v_ext0: &[T],
    threshold: T,
) -> Result<DensityOperator<T>> {
    let h = free_hamiltonian(grid, beta)?.with_diagonal_added(v_ext0);
    let dec = eig_sym_tridiag(&h, grid)?;
    let weights: Vec<T> = dec.eigenvalues.iter().map(|&l| T::one() / (T::one() + l * l)).collect();
    let total = weights.iter().copied().sum();
    let rho = DensityOperator::from_real_spectrum(*grid, weights, dec.vectors)?;
    Ok(unit_trace(rho, total, threshold))
}

/// Localization and floor of the wave-packet initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketShape {
    pub center: f64,
    pub width: f64,
    pub floor: f64,
}

impl Default for PacketShape {
    fn default() -> Self {
        Self { center: 0.42, width: 0.075, floor: 5e-3 }
    }
}

/// `chi g0 chi / Tr`, where `g0 = sum_{p=1}^5 exp(-(8 pi beta p)^2) |e^{8 i pi p x}><...|`
/// and `chi(x) = exp(-(x - x0)^2 / sigma^2) + eta`.
pub fn ic_wave_packets<T: Real>(
    grid: &Grid<T>,
    beta: T,
    shape: &PacketShape,
    threshold: T,
) -> Result<DensityOperator<T>> {
    let x0 = T::lit(shape.center);
    let sigma = T::lit(shape.width);
    let eta = T::lit(shape.floor);
    if !(sigma > T::zero()) || !(eta >= T::zero()) {
        return Err(Error::Config("packet width must be positive and floor non-negative".into()));
    }
    let nodes = grid.nodes();
    let chi: Vec<T> = nodes.iter().map(|&x| (-((x - x0) / sigma).powi(2)).exp() + eta).collect();
    // plane waves normalized in the grid inner product
    let norm = T::one() / (T::from_usize_lossy(grid.len()) * grid.dx()).sqrt();
    let eight_pi = T::lit(8.0) * T::PI();
    let mut weights = Vec::with_capacity(5);
    let mut vectors = Vec::with_capacity(5);
    for p in 1..=5 {
        let k = eight_pi * T::from_usize_lossy(p);
        weights.push((-(k * beta).powi(2)).exp());
        vectors.push(
            nodes.iter().zip(&chi).map(|(&x, &c)| Complex::from_polar(norm * c, k * x)).collect::<Vec<_>>(),
        );
    }
    let rho = DensityOperator::from_vectors(*grid, weights, vectors)?;
    let total = rho.trace();
    Ok(unit_trace(rho, total, threshold))
}

/// External potentials and initial state of a test case. `v_ext_initial`
/// only shapes `rho0`; both solvers run with `v_ext_run`.
#[derive(Debug, Clone)]
pub struct Scenario<T: Real> {
    pub kind: ScenarioKind,
    pub v_ext_initial: Vec<T>,
    pub v_ext_run: Vec<T>,
    pub rho0: DensityOperator<T>,
}

/// Knobs shared by the scenario constructors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub beta: f64,
    pub truncation: f64,
    pub barrier: BarrierLayout,
    /// Slope of the potential switched on at `t = 0` (Maxwellian and
    /// function-of-Hamiltonian cases).
    pub tilt: f64,
    pub packets: PacketShape,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            beta: 0.015,
            truncation: 1e-7,
            barrier: BarrierLayout::default(),
            tilt: -2.0,
            packets: PacketShape::default(),
        }
    }
}

impl<T: Real> Scenario<T> {
    pub fn build(kind: ScenarioKind, grid: &Grid<T>, params: &ScenarioParams) -> Result<Self> {
        let beta = T::lit(params.beta);
        let threshold = T::lit(params.truncation);
        let v0 = double_barrier_potential(grid, &params.barrier)?;
        let (v_run, rho0) = match kind {
            ScenarioKind::Maxwellian => {
                (tilted_potential(&v0, T::lit(params.tilt), grid)?, ic_maxwellian(grid, beta, &v0, threshold)?)
            }
            ScenarioKind::HamiltonianFunction => (
                tilted_potential(&v0, T::lit(params.tilt), grid)?,
                ic_hamiltonian_function(grid, beta, &v0, threshold)?,
            ),
            ScenarioKind::WavePackets => (v0.clone(), ic_wave_packets(grid, beta, &params.packets, threshold)?),
        };
        Ok(Self { kind, v_ext_initial: v0, v_ext_run: v_run, rho0 })
    }
}
