//! Uniform mesh on `[0, 1]`, the discrete differential operators built on it,
//! the weighted inner product and the Poisson solver.
//!
//! Interior nodes sit at `x_p = p dx`, `p = 1..=N`, with `dx = 1 / (N + 1)`.
//! Vectors are indexed from zero, so entry `i` lives at `x = (i + 1) dx`.

use std::ops::Deref;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{max_abs, Real};

/// Uniform interior grid of `N` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Grid<T: Real> {
    n: usize,
    dx: T,
}

impl<T: Real> Grid<T> {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("grid needs at least one interior point".into()));
        }
        Ok(Self { n, dx: T::one() / T::from_usize_lossy(n + 1) })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dx(&self) -> T {
        self.dx
    }

    /// Position of the zero-based entry `i`.
    #[inline]
    pub fn node(&self, i: usize) -> T {
        T::from_usize_lossy(i + 1) * self.dx
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Midpoint `x_{k+1/2} = (k + 1/2) dx` for `k = 0..=N`. Midpoint `k` separates
    /// entry `k - 1` from entry `k`.
    #[inline]
    pub fn midpoint(&self, k: usize) -> T {
        (T::from_usize_lossy(k) + T::lit(0.5)) * self.dx
    }

    /// Moves a requested breakpoint onto the nearest midpoint, so a piecewise
    /// constant function that jumps there is smooth inside every cell.
    pub fn snap_to_midpoint(&self, x: T) -> SnappedBreakpoint<T> {
        let k = (x / self.dx - T::lit(0.5)).round();
        let k = k.max(T::zero()).min(T::from_usize_lossy(self.n));
        let index = k.to_usize().unwrap_or(0);
        SnappedBreakpoint { requested: x, index, position: self.midpoint(index) }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::LengthMismatch { expected: self.n, got: len });
        }
        Ok(())
    }

    fn require_operator_size(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidGrid(format!("operators need N >= 2, got N = {}", self.n)));
        }
        Ok(())
    }

    /// `dx * sum(values)`, the discrete integral over `[0, 1]`.
    pub fn integrate(&self, values: &[T]) -> T {
        self.dx * values.iter().copied().sum::<T>()
    }
}

/// Result of [`Grid::snap_to_midpoint`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnappedBreakpoint<T> {
    pub requested: T,
    /// Entries with index `>= index` lie to the right of the breakpoint.
    pub index: usize,
    pub position: T,
}

/// Nonnegative particle density sampled on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
#[serde(transparent)]
pub struct DensityField<T: Real> {
    values: Vec<T>,
}

impl<T: Real> DensityField<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("density entry {i}")));
            }
            if v < T::zero() {
                return Err(Error::NonPositiveDensity { index: i, value: v.to_f64_lossy() });
            }
        }
        Ok(Self { values })
    }

    /// Wraps values known to be valid (e.g. sums of squared moduli).
    pub(crate) fn from_raw(values: Vec<T>) -> Self {
        Self { values }
    }

    /// Fails unless every entry is strictly positive.
    pub fn require_positive(&self) -> Result<()> {
        match self.values.iter().position(|&v| v <= T::zero()) {
            Some(i) => Err(Error::NonPositiveDensity { index: i, value: self.values[i].to_f64_lossy() }),
            None => Ok(()),
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn mass(&self, grid: &Grid<T>) -> T {
        grid.integrate(&self.values)
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { values: self.values.iter().map(|&v| v * factor).collect() }
    }
}

impl<T: Real> Deref for DensityField<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.values
    }
}

/// Real tridiagonal matrix. `lower[i]` sits at `(i + 1, i)`, `upper[i]` at `(i, i + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Tridiagonal<T: Real> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn symmetric(diag: Vec<T>, off: Vec<T>) -> Self {
        assert_eq!(off.len() + 1, diag.len().max(1));
        Self { lower: off.clone(), diag, upper: off }
    }

    pub fn general(lower: Vec<T>, diag: Vec<T>, upper: Vec<T>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert_eq!(lower.len() + 1, diag.len().max(1));
        Self { lower, diag, upper }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.lower == self.upper
    }

    /// Off-diagonal of a symmetric operator.
    pub fn off(&self) -> &[T] {
        &self.upper
    }

    pub fn scaled(&self, factor: T) -> Self {
        let s = |v: &Vec<T>| v.iter().map(|&x| x * factor).collect();
        Self { lower: s(&self.lower), diag: s(&self.diag), upper: s(&self.upper) }
    }

    /// `self + diag(shift)`.
    pub fn with_diagonal_added(&self, shift: &[T]) -> Self {
        assert_eq!(shift.len(), self.len());
        let mut out = self.clone();
        for (d, &s) in out.diag.iter_mut().zip(shift) {
            *d = *d + s;
        }
        out
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc = acc + self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    acc = acc + self.upper[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    pub fn apply_transpose(&self, x: &[T]) -> Vec<T> {
        self.transpose().apply(x)
    }

    pub fn transpose(&self) -> Self {
        Self { lower: self.upper.clone(), diag: self.diag.clone(), upper: self.lower.clone() }
    }

    pub fn apply_complex(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut acc = x[i] * self.diag[i];
                if i > 0 {
                    acc = acc + x[i - 1] * self.lower[i - 1];
                }
                if i + 1 < n {
                    acc = acc + x[i + 1] * self.upper[i];
                }
                acc
            })
            .collect()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.len();
        let mut m = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i + 1 < n {
                m[i][i + 1] = self.upper[i];
                m[i + 1][i] = self.lower[i];
            }
        }
        m
    }

    /// Row sums `A 1`.
    pub fn row_sums(&self) -> Vec<T> {
        self.apply(&vec![T::one(); self.len()])
    }
}

/// Discrete Laplacian with first-order Neumann closure,
/// `(1/dx^2) tridiag(1, (-1, -2, ..., -2, -1), 1)`.
pub fn neumann_laplacian<T: Real>(grid: &Grid<T>) -> Result<Tridiagonal<T>> {
    grid.require_operator_size()?;
    let n = grid.len();
    let inv = T::one() / (grid.dx() * grid.dx());
    let mut diag = vec![-T::lit(2.0) * inv; n];
    diag[0] = -inv;
    diag[n - 1] = -inv;
    Ok(Tridiagonal::symmetric(diag, vec![inv; n - 1]))
}

/// Discrete Laplacian with homogeneous Dirichlet values, `(1/dx^2) tridiag(1, -2, 1)`.
pub fn dirichlet_laplacian<T: Real>(grid: &Grid<T>) -> Result<Tridiagonal<T>> {
    grid.require_operator_size()?;
    let n = grid.len();
    let inv = T::one() / (grid.dx() * grid.dx());
    Ok(Tridiagonal::symmetric(vec![-T::lit(2.0) * inv; n], vec![inv; n - 1]))
}

/// The one-sided difference matrices of the drift-diffusion scheme.
///
/// `forward` and `backward` carry a zero boundary row (last and first,
/// respectively); the tilde variants are the divergence operators applied to
/// the fluxes.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceOperators<T: Real> {
    pub forward: Tridiagonal<T>,
    pub backward: Tridiagonal<T>,
    pub forward_tilde: Tridiagonal<T>,
    pub backward_tilde: Tridiagonal<T>,
}

pub fn difference_matrices<T: Real>(grid: &Grid<T>) -> Result<DifferenceOperators<T>> {
    grid.require_operator_size()?;
    let n = grid.len();
    let inv = T::one() / grid.dx();
    let zeros = vec![T::zero(); n - 1];
    let ones = vec![inv; n - 1];

    let mut fwd_diag = vec![-inv; n];
    fwd_diag[n - 1] = T::zero();
    let forward = Tridiagonal::general(zeros.clone(), fwd_diag, ones.clone());

    let mut bwd_diag = vec![inv; n];
    bwd_diag[0] = T::zero();
    let backward = Tridiagonal::general(vec![-inv; n - 1], bwd_diag, zeros.clone());

    let forward_tilde = Tridiagonal::general(zeros.clone(), vec![-inv; n], ones);
    let backward_tilde = Tridiagonal::general(vec![-inv; n - 1], vec![inv; n], zeros);

    Ok(DifferenceOperators { forward, backward, forward_tilde, backward_tilde })
}

/// `<u, v> = dx * sum(conj(u_p) v_p)`.
pub fn inner_product<T: Real>(u: &[Complex<T>], v: &[Complex<T>], grid: &Grid<T>) -> Result<Complex<T>> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch { expected: u.len(), got: v.len() });
    }
    grid.check_len(u.len())?;
    Ok(weighted_inner(u, v, grid.dx()))
}

pub(crate) fn weighted_inner<T: Real>(u: &[Complex<T>], v: &[Complex<T>], dx: T) -> Complex<T> {
    let mut re = T::zero();
    let mut im = T::zero();
    for (a, b) in u.iter().zip(v) {
        re = re + a.re * b.re + a.im * b.im;
        im = im + a.re * b.im - a.im * b.re;
    }
    Complex::new(re * dx, im * dx)
}

/// Real counterpart of [`inner_product`].
pub fn real_inner_product<T: Real>(u: &[T], v: &[T], grid: &Grid<T>) -> T {
    grid.dx() * u.iter().zip(v).map(|(&a, &b)| a * b).sum::<T>()
}

/// Solves `A x = b` for a real tridiagonal `A` without pivoting (Thomas
/// recurrence) and rejects the result when `|Ax - b| / |b|` exceeds `1e-10`.
pub fn solve_tridiagonal<T: Real>(a: &Tridiagonal<T>, rhs: &[T]) -> Result<Vec<T>> {
    let n = a.len();
    if rhs.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: rhs.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut pivot = a.diag[0];
    if pivot == T::zero() {
        return Err(Error::ZeroPivot { row: 0 });
    }
    if n > 1 {
        c[0] = a.upper[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = a.diag[i] - a.lower[i - 1] * c[i - 1];
        if pivot == T::zero() || !pivot.is_finite() {
            return Err(Error::ZeroPivot { row: i });
        }
        if i + 1 < n {
            c[i] = a.upper[i] / pivot;
        }
        d[i] = (rhs[i] - a.lower[i - 1] * d[i - 1]) / pivot;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] = x[i] - c[i] * x[i + 1];
    }

    let residual: Vec<T> = a.apply(&x).iter().zip(rhs).map(|(&ax, &b)| ax - b).collect();
    let scale = max_abs(rhs);
    let res = max_abs(&residual);
    if scale > T::zero() && res / scale > T::lit(1e-10) || !res.is_finite() {
        return Err(Error::Residual { residual: (res / scale).to_f64_lossy() });
    }
    Ok(x)
}

/// Poisson potential: solves `alpha^2 Lap_Dir V = n` with zero boundary values.
pub fn solve_poisson<T: Real>(n: &[T], alpha: T, grid: &Grid<T>) -> Result<Vec<T>> {
    grid.check_len(n.len())?;
    if !(alpha > T::zero()) {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    if n.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Poisson right-hand side".into()));
    }
    let lap = dirichlet_laplacian(grid)?;
    let rhs: Vec<T> = n.iter().map(|&v| v / (alpha * alpha)).collect();
    solve_tridiagonal(&lap, &rhs)
}
