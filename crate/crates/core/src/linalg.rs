//! Eigensolvers and tridiagonal solves.
//!
//! Vectors returned from the public decompositions are normalized in the
//! grid's weighted inner product, `dx * sum |v|^2 = 1`. The raw kernels
//! (`*_euclidean`) work with ordinary unit vectors.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Tridiagonal};
use crate::scalar::Real;

const QL_MAX_SWEEPS: usize = 60;

/// Eigenvalues with (a leading subset of) their eigenvectors.
///
/// `vectors[p]` belongs to `eigenvalues[p]`; when only some vectors were
/// requested, `vectors.len() < eigenvalues.len()` and the vectors cover the
/// first entries in the ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "V: Serialize", deserialize = "V: Deserialize<'de>"))]
pub struct SpectralDecomposition<T: Real, V = T> {
    pub eigenvalues: Vec<T>,
    pub vectors: Vec<Vec<V>>,
}

impl<T: Real, V> SpectralDecomposition<T, V> {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Dense complex square matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix<T: Real> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![Complex::new(T::zero(), T::zero()); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_real_dense(rows: &[Vec<T>]) -> Self {
        Self::from_fn(rows.len(), |i, j| Complex::new(rows[i][j], T::zero()))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `max |M - M^H|`.
    pub fn hermitian_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..=i {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `(M + M^H) / 2`.
    pub fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.n, |i, j| (self[(i, j)] + self[(j, i)].conj()) * half)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).fold(T::zero(), |m, (a, b)| m.max((*a - *b).norm()))
    }

    pub fn scale(&mut self, factor: T) {
        for z in &mut self.data {
            *z = *z * factor;
        }
    }

    pub fn add_scaled(&mut self, other: &Self, factor: T) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b * factor;
        }
    }

    pub fn mul_vec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        (0..self.n).map(|i| self.row(i).iter().zip(x).map(|(a, b)| *a * *b).sum()).collect()
    }
}

impl<T: Real> std::ops::Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = Complex<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.n + j]
    }
}

impl<T: Real> std::ops::IndexMut<(usize, usize)> for ComplexMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.n + j]
    }
}

/// `sqrt(a^2 + b^2)`, falling back to the scaled form only when squaring
/// could over- or underflow. `hypot` from libm is several times slower and
/// dominates the QL sweep otherwise.
#[inline]
fn fast_hypot<T: Real>(a: T, b: T) -> T {
    let m = a.abs().max(b.abs());
    let big = T::lit(1e100);
    let small = T::lit(1e-100);
    if m < big && m > small && T::max_value() > T::lit(1e300) {
        (a * a + b * b).sqrt()
    } else {
        a.hypot(b)
    }
}

/// Implicit QL iteration on a symmetric tridiagonal matrix.
///
/// `diag` is overwritten with the (unsorted) eigenvalues. When `columns` is
/// given, the plane rotations are accumulated into it: on entry column `j`
/// holds the `j`-th basis vector of the frame the tridiagonal matrix is
/// expressed in, on exit it holds the eigenvector of `diag[j]`.
fn tql_implicit<T, V>(diag: &mut [T], off: &[T], mut columns: Option<&mut [Vec<V>]>) -> Result<()>
where
    T: Real,
    V: Copy + Add<Output = V> + Sub<Output = V> + Mul<T, Output = V>,
{
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    let d = diag;
    let mut e = vec![T::zero(); n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);
    let eps = T::epsilon();
    let two = T::lit(2.0);

    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > QL_MAX_SWEEPS {
                return Err(Error::EigenNoConvergence { index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = fast_hypot(g, T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = fast_hypot(f, g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(cols) = columns.as_deref_mut() {
                    let (left, right) = cols.split_at_mut(i + 1);
                    let zi = &mut left[i];
                    let zi1 = &mut right[0];
                    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let f = *b;
                        *b = *a * s + f * c;
                        *a = *a * c - f * s;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

/// Eigenvalues of a symmetric 2x2 `[[a, b], [b, c]]`, larger first.
fn eig2<T: Real>(a: T, b: T, c: T) -> (T, T) {
    let sm = a + c;
    let rt = fast_hypot(a - c, T::lit(2.0) * b);
    let half = T::lit(0.5);
    if sm == T::zero() {
        return (half * rt, -half * rt);
    }
    let big = if sm > T::zero() { half * (sm + rt) } else { half * (sm - rt) };
    let small = (a * c - b * b) / big;
    if big > small { (big, small) } else { (small, big) }
}

/// Root-free QL iteration (Pal-Walker-Kahan) for eigenvalues only. It
/// works on squared off-diagonals and needs one square root per sweep
/// instead of one per rotation.
fn sterf<T: Real>(d: &mut [T], off: &[T]) -> Result<()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    let eps = T::epsilon();
    let eps2 = eps * eps;
    let mut e: Vec<T> = off.iter().map(|&x| x * x).chain(std::iter::once(T::zero())).collect();
    let two = T::lit(2.0);
    let mut l = 0;
    let mut sweeps = 0;
    let max_sweeps = QL_MAX_SWEEPS * n;
    while l < n {
        let mut m = l;
        while m + 1 < n {
            if e[m].abs() <= eps2 * (d[m] * d[m + 1]).abs() || e[m] == T::zero() {
                break;
            }
            m += 1;
        }
        if m + 1 < n {
            e[m] = T::zero();
        }
        if m == l {
            l += 1;
            continue;
        }
        if m == l + 1 {
            let (r1, r2) = eig2(d[l], e[l].sqrt(), d[l + 1]);
            d[l] = r1;
            d[l + 1] = r2;
            e[l] = T::zero();
            l += 2;
            continue;
        }
        sweeps += 1;
        if sweeps > max_sweeps {
            return Err(Error::EigenNoConvergence { index: l });
        }
        let p = d[l];
        let rte = e[l].sqrt();
        let mut sigma = (d[l + 1] - p) / (two * rte);
        let r = fast_hypot(sigma, T::one());
        sigma = p - rte / (sigma + if sigma >= T::zero() { r } else { -r });

        let mut c = T::one();
        let mut s = T::zero();
        let mut gamma = d[m] - sigma;
        let mut p = gamma * gamma;
        let mut i = m;
        while i > l {
            i -= 1;
            let bb = e[i];
            let r = p + bb;
            if i + 1 != m {
                e[i + 1] = s * r;
            }
            let oldc = c;
            c = p / r;
            s = bb / r;
            let oldgam = gamma;
            let alpha = d[i];
            gamma = c * (alpha - sigma) - s * oldgam;
            d[i + 1] = oldgam + (alpha - gamma);
            p = if c != T::zero() { gamma * gamma / c } else { oldc * bb };
        }
        e[l] = s * p;
        d[l] = sigma + gamma;
    }
    Ok(())
}

fn require_symmetric<T: Real>(op: &Tridiagonal<T>) -> Result<()> {
    if !op.is_symmetric() {
        return Err(Error::Config("eigensolver needs a symmetric operator".into()));
    }
    if op.diag.iter().chain(op.upper.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("operator entries".into()));
    }
    Ok(())
}

/// All eigenvalues of a symmetric tridiagonal operator, ascending.
pub fn tridiagonal_eigenvalues<T: Real>(op: &Tridiagonal<T>) -> Result<Vec<T>> {
    require_symmetric(op)?;
    let mut d = op.diag.clone();
    sterf(&mut d, op.off())?;
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(d)
}

/// Flips the sign so the largest-magnitude entry is positive.
fn fix_sign<T: Real>(v: &mut [T]) {
    let mut best = T::zero();
    let mut sign = T::one();
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = if x < T::zero() { -T::one() } else { T::one() };
        }
    }
    if sign < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Rotates the phase so the largest-magnitude entry is real and positive.
fn fix_phase<T: Real>(v: &mut [Complex<T>]) {
    let mut best = T::zero();
    let mut phase = Complex::new(T::one(), T::zero());
    for z in v.iter() {
        let a = z.norm();
        if a > best {
            best = a;
            phase = z.conj() / a;
        }
    }
    v.iter_mut().for_each(|z| *z = *z * phase);
}

/// Full spectrum of a real symmetric tridiagonal operator with eigenvectors
/// normalized in the grid inner product, eigenvalues ascending.
pub fn eig_sym_tridiag<T: Real>(op: &Tridiagonal<T>, grid: &Grid<T>) -> Result<SpectralDecomposition<T>> {
    require_symmetric(op)?;
    grid.check_len(op.len())?;
    let n = op.len();
    let mut d = op.diag.clone();
    let mut cols: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut c = vec![T::zero(); n];
            c[j] = T::one();
            c
        })
        .collect();
    tql_implicit(&mut d, op.off(), Some(&mut cols))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let scale = T::one() / grid.dx().sqrt();
    let eigenvalues = order.iter().map(|&k| d[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut v: Vec<T> = cols[k].iter().map(|&x| x * scale).collect();
            fix_sign(&mut v);
            v
        })
        .collect();
    Ok(SpectralDecomposition { eigenvalues, vectors })
}

/// Tridiagonal `LU` with partial pivoting of `T - shift I`, used for inverse iteration.
struct ShiftedLu<T> {
    a: Vec<T>,
    b: Vec<T>,
    u2: Vec<T>,
    l: Vec<T>,
    swapped: Vec<bool>,
}

impl<T: Real> ShiftedLu<T> {
    fn new(op: &Tridiagonal<T>, shift: T, tiny: T) -> Self {
        let n = op.len();
        let mut a: Vec<T> = op.diag.iter().map(|&d| d - shift).collect();
        let mut b = op.upper.clone();
        let mut l = op.lower.clone();
        let mut u2 = vec![T::zero(); n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if a[i].abs() >= l[i].abs() {
                if a[i] == T::zero() {
                    a[i] = tiny;
                }
                let fact = l[i] / a[i];
                l[i] = fact;
                a[i + 1] = a[i + 1] - fact * b[i];
            } else {
                let fact = a[i] / l[i];
                a[i] = l[i];
                l[i] = fact;
                let temp = b[i];
                b[i] = a[i + 1];
                a[i + 1] = temp - fact * a[i + 1];
                if i + 2 < n {
                    u2[i] = b[i + 1];
                    b[i + 1] = -fact * b[i + 1];
                }
                swapped[i] = true;
            }
        }
        if n > 0 && a[n - 1] == T::zero() {
            a[n - 1] = tiny;
        }
        Self { a, b, u2, l, swapped }
    }

    fn solve_in_place(&self, x: &mut [T]) {
        let n = x.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] = x[i + 1] - self.l[i] * x[i];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            if i + 1 < n {
                v = v - self.b[i] * x[i + 1];
            }
            if i + 2 < n {
                v = v - self.u2[i] * x[i + 2];
            }
            x[i] = v / self.a[i];
        }
    }
}

/// Eigenvalues of the whole spectrum, plus eigenvectors for every eigenvalue
/// within `window` of the smallest one.
///
/// Vectors come from inverse iteration on the pivoted tridiagonal `LU`,
/// reorthogonalized inside clusters of close eigenvalues.
pub fn eig_sym_tridiag_window<T: Real>(
    op: &Tridiagonal<T>,
    grid: &Grid<T>,
    window: T,
) -> Result<SpectralDecomposition<T>> {
    grid.check_len(op.len())?;
    let eigenvalues = tridiagonal_eigenvalues(op)?;
    let n = op.len();
    if n == 0 {
        return Ok(SpectralDecomposition { eigenvalues, vectors: Vec::new() });
    }
    let cutoff = eigenvalues[0] + window;
    let count = eigenvalues.iter().take_while(|&&l| l <= cutoff).count();
    let vectors = inverse_iteration(op, &eigenvalues[..count])?
        .into_iter()
        .map(|v| {
            let scale = T::one() / grid.dx().sqrt();
            v.into_iter().map(|x| x * scale).collect()
        })
        .collect();
    Ok(SpectralDecomposition { eigenvalues, vectors })
}

fn inverse_iteration<T: Real>(op: &Tridiagonal<T>, eigenvalues: &[T]) -> Result<Vec<Vec<T>>> {
    let n = op.len();
    let norm1 = (0..n)
        .map(|i| {
            let mut s = op.diag[i].abs();
            if i > 0 {
                s = s + op.lower[i - 1].abs();
            }
            if i + 1 < n {
                s = s + op.upper[i].abs();
            }
            s
        })
        .fold(T::zero(), T::max)
        .max(T::min_positive_value());
    let eps = T::epsilon();
    let separation = T::lit(10.0) * eps * norm1;
    let cluster_gap = T::lit(1e-4) * norm1;
    let tiny = eps * norm1;

    // deterministic start vector, rotated per eigenvalue
    let start: Vec<T> = (0..n)
        .map(|k| T::one() + T::lit(0.5) * (T::lit(1.618_033_988_7) * T::from_usize_lossy(k * 7 + 1)).sin())
        .collect();
    let mut vectors: Vec<Vec<T>> = Vec::with_capacity(eigenvalues.len());
    let mut cluster_start = 0;
    let mut prev_shift = T::neg_infinity();
    for (j, &lambda) in eigenvalues.iter().enumerate() {
        if j > 0 && lambda - eigenvalues[j - 1] > cluster_gap {
            cluster_start = j;
        }
        let mut shift = lambda;
        if j > cluster_start && shift - prev_shift < separation {
            shift = prev_shift + separation;
        }
        prev_shift = shift;
        let lu = ShiftedLu::new(op, shift, tiny);
        let mut x: Vec<T> = (0..n).map(|k| start[(k + 7 * j) % n]).collect();
        for _ in 0..2 {
            lu.solve_in_place(&mut x);
            for prev in &vectors[cluster_start..j] {
                let proj: T = prev.iter().zip(&x).map(|(&a, &b)| a * b).sum();
                x.iter_mut().zip(prev).for_each(|(xi, &p)| *xi = *xi - proj * p);
            }
            let nrm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
            if !(nrm > T::zero()) || !nrm.is_finite() {
                return Err(Error::EigenNoConvergence { index: j });
            }
            x.iter_mut().for_each(|v| *v = *v / nrm);
        }
        fix_sign(&mut x);
        vectors.push(x);
    }
    Ok(vectors)
}

/// Eigen-decomposition of a Hermitian matrix with Euclidean-orthonormal
/// eigenvectors, eigenvalues ascending.
///
/// Householder reduction to a complex Hermitian tridiagonal, a diagonal phase
/// change to a real symmetric tridiagonal, then implicit QL.
pub fn hermitian_eigen_euclidean<T: Real>(m: &ComplexMatrix<T>) -> Result<SpectralDecomposition<T, Complex<T>>> {
    let n = m.dim();
    let zero = Complex::new(T::zero(), T::zero());
    if n == 0 {
        return Ok(SpectralDecomposition { eigenvalues: Vec::new(), vectors: Vec::new() });
    }
    let mut a = m.clone();
    // columns of the accumulated unitary Q
    let mut q: Vec<Vec<Complex<T>>> = (0..n)
        .map(|j| {
            let mut c = vec![zero; n];
            c[j] = Complex::new(T::one(), T::zero());
            c
        })
        .collect();
    let mut sub = vec![zero; n.saturating_sub(1)];

    for k in 0..n.saturating_sub(1) {
        let len = n - k - 1;
        let x: Vec<Complex<T>> = (k + 1..n).map(|i| a[(i, k)]).collect();
        let alpha = x.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        let tail_zero = x[1..].iter().all(|z| *z == zero);
        if len == 1 || alpha == T::zero() || tail_zero {
            sub[k] = x[0];
            continue;
        }
        let x0abs = x[0].norm();
        let phase = if x0abs > T::zero() { x[0] / x0abs } else { Complex::new(T::one(), T::zero()) };
        let mut v = x;
        v[0] = v[0] + phase * alpha;
        let vnorm2 = T::lit(2.0) * alpha * (alpha + x0abs);
        let tau = T::lit(2.0) / vnorm2;
        sub[k] = -phase * alpha;

        // p = tau * B v over the trailing block
        let mut p = vec![zero; len];
        for (r, pr) in p.iter_mut().enumerate() {
            let row = a.row(k + 1 + r);
            let mut acc = zero;
            for (c, vc) in v.iter().enumerate() {
                acc = acc + row[k + 1 + c] * *vc;
            }
            *pr = acc * tau;
        }
        let vp: Complex<T> = v.iter().zip(&p).map(|(vi, pi)| vi.conj() * *pi).sum();
        let kk = vp.re * tau * T::lit(0.5);
        let qv: Vec<Complex<T>> = p.iter().zip(&v).map(|(pi, vi)| *pi - *vi * kk).collect();
        for r in 0..len {
            let vr = v[r];
            let qr = qv[r];
            for c in 0..len {
                let upd = vr * qv[c].conj() + qr * v[c].conj();
                let cell = &mut a[(k + 1 + r, k + 1 + c)];
                *cell = *cell - upd;
            }
        }
        a[(k + 1, k)] = sub[k];
        a[(k, k + 1)] = sub[k].conj();
        for i in k + 2..n {
            a[(i, k)] = zero;
            a[(k, i)] = zero;
        }
        // Q <- Q H on columns k+1..n
        for row in 0..n {
            let mut w = zero;
            for (c, vc) in v.iter().enumerate() {
                w = w + q[k + 1 + c][row] * *vc;
            }
            let w = w * tau;
            for (c, vc) in v.iter().enumerate() {
                let cell = &mut q[k + 1 + c][row];
                *cell = *cell - w * vc.conj();
            }
        }
    }

    let mut diag: Vec<T> = (0..n).map(|i| a[(i, i)].re).collect();
    let mut off = vec![T::zero(); n.saturating_sub(1)];
    let mut phase = Complex::new(T::one(), T::zero());
    for k in 0..n.saturating_sub(1) {
        let mag = sub[k].norm();
        off[k] = mag;
        if mag > T::zero() {
            phase = phase * (sub[k] / mag);
        }
        let col = &mut q[k + 1];
        col.iter_mut().for_each(|z| *z = *z * phase);
    }
    tql_implicit(&mut diag, &off, Some(&mut q))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| diag[x].partial_cmp(&diag[y]).unwrap());
    let eigenvalues = order.iter().map(|&k| diag[k]).collect();
    let vectors = order.into_iter().map(|k| std::mem::take(&mut q[k])).collect();
    Ok(SpectralDecomposition { eigenvalues, vectors })
}

/// Spectral decomposition of the operator whose kernel on the grid is `m`.
///
/// The kernel convention is the one used for density matrices: `m` has the
/// local density on its diagonal, so the operator acting on grid functions is
/// `dx * m`. Returned eigenvalues are those of `dx * m`, sorted descending, and
/// the eigenvectors are normalized in the grid inner product with the
/// largest-magnitude entry real and positive. The input is symmetrized first.
pub fn eig_hermitian<T: Real>(m: &ComplexMatrix<T>, grid: &Grid<T>) -> Result<SpectralDecomposition<T, Complex<T>>> {
    grid.check_len(m.dim())?;
    let sym = m.symmetrized();
    let raw = hermitian_eigen_euclidean(&sym)?;
    let dx = grid.dx();
    let scale = T::one() / dx.sqrt();
    let mut pairs: Vec<(T, Vec<Complex<T>>)> = raw
        .eigenvalues
        .into_iter()
        .zip(raw.vectors)
        .map(|(l, v)| {
            let mut v: Vec<Complex<T>> = v.into_iter().map(|z| z * scale).collect();
            fix_phase(&mut v);
            (l * dx, v)
        })
        .collect();
    pairs.reverse();
    let (eigenvalues, vectors) = pairs.into_iter().unzip();
    Ok(SpectralDecomposition { eigenvalues, vectors })
}

/// Complex tridiagonal matrix, same layout as [`Tridiagonal`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTridiagonal<T: Real> {
    pub lower: Vec<Complex<T>>,
    pub diag: Vec<Complex<T>>,
    pub upper: Vec<Complex<T>>,
}

impl<T: Real> ComplexTridiagonal<T> {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `a * I + b * op` for a real operator.
    pub fn from_real(op: &Tridiagonal<T>, a: Complex<T>, b: Complex<T>) -> Self {
        Self {
            lower: op.lower.iter().map(|&x| b * x).collect(),
            diag: op.diag.iter().map(|&x| a + b * x).collect(),
            upper: op.upper.iter().map(|&x| b * x).collect(),
        }
    }

    pub fn apply(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc = acc + self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc = acc + self.upper[i] * x[i + 1];
            }
            out.push(acc);
        }
        out
    }

    pub fn factor(&self) -> Result<ComplexTridiagonalLu<T>> {
        ComplexTridiagonalLu::new(self)
    }
}

/// Stored Thomas factorization for repeated solves with one matrix.
#[derive(Debug, Clone)]
pub struct ComplexTridiagonalLu<T: Real> {
    lower: Vec<Complex<T>>,
    inv_pivot: Vec<Complex<T>>,
    upper_scaled: Vec<Complex<T>>,
}

impl<T: Real> ComplexTridiagonalLu<T> {
    fn new(a: &ComplexTridiagonal<T>) -> Result<Self> {
        let n = a.len();
        let mut inv_pivot = Vec::with_capacity(n);
        let mut upper_scaled = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let mut pivot = a.diag[i];
            if i > 0 {
                pivot = pivot - a.lower[i - 1] * upper_scaled[i - 1];
            }
            if pivot.norm() == T::zero() || !pivot.re.is_finite() || !pivot.im.is_finite() {
                return Err(Error::ZeroPivot { row: i });
            }
            let inv = Complex::new(T::one(), T::zero()) / pivot;
            inv_pivot.push(inv);
            if i + 1 < n {
                upper_scaled.push(a.upper[i] * inv);
            }
        }
        Ok(Self { lower: a.lower.clone(), inv_pivot, upper_scaled })
    }

    pub fn solve_in_place(&self, x: &mut [Complex<T>]) {
        let n = x.len();
        if n == 0 {
            return;
        }
        x[0] = x[0] * self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i - 1] * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] = x[i] - self.upper_scaled[i] * x[i + 1];
        }
    }
}

/// Solves a complex tridiagonal system by elimination without pivoting.
pub fn solve_complex_tridiag<T: Real>(a: &ComplexTridiagonal<T>, b: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    if b.len() != a.len() {
        return Err(Error::LengthMismatch { expected: a.len(), got: b.len() });
    }
    let lu = a.factor()?;
    let mut x = b.to_vec();
    lu.solve_in_place(&mut x);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{dirichlet_laplacian, neumann_laplacian, weighted_inner};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    type C = Complex<f64>;

    fn check_decomposition(op: &Tridiagonal<f64>, g: &Grid<f64>, s: &SpectralDecomposition<f64>) {
        let dx = g.dx();
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        for (p, v) in s.vectors.iter().enumerate() {
            let hv = op.apply(v);
            let res = hv.iter().zip(v).map(|(a, b)| (a - s.eigenvalues[p] * b).powi(2)).sum::<f64>().sqrt()
                * dx.sqrt();
            assert!(res / (s.eigenvalues[p].abs() + 1.0) < 1e-10, "residual {res} for mode {p}");
            for (q, w) in s.vectors.iter().enumerate().take(p + 1) {
                let ip = dx * v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
                let expect = if p == q { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-10, "<{p},{q}> = {ip}");
            }
        }
    }

    #[test]
    fn neumann_hamiltonian_spectrum_closed_form() {
        let n = 8;
        let beta = 0.015;
        let g = Grid::<f64>::new(n).unwrap();
        let h0 = neumann_laplacian(&g).unwrap().scaled(-beta * beta);
        let s = eig_sym_tridiag(&h0, &g).unwrap();
        check_decomposition(&h0, &g, &s);
        let dx = g.dx();
        for k in 0..n {
            let exact = 4.0 * beta * beta / (dx * dx) * (k as f64 * PI / (2.0 * n as f64)).sin().powi(2);
            assert!((s.eigenvalues[k] - exact).abs() < 1e-12 * (1.0 + exact), "{k}: {} vs {exact}", s.eigenvalues[k]);
        }
        // constant ground state
        let v0 = &s.vectors[0];
        assert!(s.eigenvalues[0].abs() < 1e-12);
        assert!(v0.iter().all(|&x| (x - 1.0 / (n as f64 * dx).sqrt()).abs() < 1e-10));
    }

    #[test]
    fn dirichlet_spectrum_closed_form_and_negative() {
        let n = 8;
        let g = Grid::<f64>::new(n).unwrap();
        let lap = dirichlet_laplacian(&g).unwrap();
        let s = eig_sym_tridiag(&lap, &g).unwrap();
        let dx = g.dx();
        let mut exact: Vec<f64> = (1..=n)
            .map(|k| -(4.0 / (dx * dx)) * (k as f64 * PI / (2.0 * (n + 1) as f64)).sin().powi(2))
            .collect();
        exact.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in s.eigenvalues.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10 * b.abs());
        }
        for n in 2..=16 {
            let g = Grid::<f64>::new(n).unwrap();
            let ev = tridiagonal_eigenvalues(&dirichlet_laplacian(&g).unwrap()).unwrap();
            assert!(*ev.last().unwrap() < 0.0);
            let nev = tridiagonal_eigenvalues(&neumann_laplacian(&g).unwrap()).unwrap();
            assert!(nev.last().unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn diagonal_operator() {
        let g = Grid::<f64>::new(5).unwrap();
        let a = vec![3.0, -1.0, 2.5, 0.0, 7.0];
        let op = Tridiagonal::symmetric(a.clone(), vec![0.0; 4]);
        let s = eig_sym_tridiag(&op, &g).unwrap();
        assert_eq!(s.eigenvalues, vec![-1.0, 0.0, 2.5, 3.0, 7.0]);
        let expected_index = [1, 3, 2, 0, 4];
        for (p, v) in s.vectors.iter().enumerate() {
            for (i, &x) in v.iter().enumerate() {
                let e = if i == expected_index[p] { 1.0 / g.dx().sqrt() } else { 0.0 };
                assert!((x - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn windowed_solver_matches_full_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 120;
        let g = Grid::<f64>::new(n).unwrap();
        let beta = 0.05;
        let a: Vec<f64> = g.nodes().iter().map(|x| (5.0 * x).cos() + rng.gen_range(-0.01..0.01)).collect();
        let op = neumann_laplacian(&g).unwrap().scaled(-beta * beta).with_diagonal_added(&a);
        let full = eig_sym_tridiag(&op, &g).unwrap();
        let part = eig_sym_tridiag_window(&op, &g, 20.0).unwrap();
        assert_eq!(part.eigenvalues.len(), n);
        assert!(part.vectors.len() > 10 && part.vectors.len() < n);
        for (a, b) in full.eigenvalues.iter().zip(&part.eigenvalues) {
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        }
        check_decomposition(&op, &g, &part);
        for (v, w) in full.vectors.iter().zip(&part.vectors) {
            let ip = g.dx() * v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            assert!((ip.abs() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn root_free_ql_matches_rotation_ql() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1usize, 2, 3, 7, 64, 300] {
            let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut off: Vec<f64> = (0..n.saturating_sub(1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if n > 5 {
                off[2] = 0.0;
            }
            let mut a = diag.clone();
            tql_implicit::<f64, f64>(&mut a, &off, None).unwrap();
            let mut b = diag.clone();
            sterf(&mut b, &off).unwrap();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12, "n = {n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn windowed_solver_handles_near_degenerate_pairs() {
        // two identical wells separated by a tall barrier give tunnelling doublets
        let n = 200;
        let g = Grid::<f64>::new(n).unwrap();
        let beta = 0.01;
        let v: Vec<f64> = g.nodes().iter().map(|&x| if (0.45..0.55).contains(&x) { 30.0 } else { 0.0 }).collect();
        let op = neumann_laplacian(&g).unwrap().scaled(-beta * beta).with_diagonal_added(&v);
        let part = eig_sym_tridiag_window(&op, &g, 5.0).unwrap();
        check_decomposition(&op, &g, &part);
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix<f64> {
        let mut m = ComplexMatrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = C::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in 0..i {
                let z = C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn hermitian_scaled_identity() {
        let g = Grid::<f64>::new(5).unwrap();
        let mut m = ComplexMatrix::identity(5);
        m.scale(2.5);
        let s = eig_hermitian(&m, &g).unwrap();
        for l in s.eigenvalues {
            assert!((l - 2.5 * g.dx()).abs() < 1e-14);
        }
        let raw = hermitian_eigen_euclidean(&m).unwrap();
        assert!(raw.eigenvalues.iter().all(|l| (l - 2.5).abs() < 1e-14));
    }

    #[test]
    fn hermitian_rank_one_recovers_weight() {
        let n = 7;
        let g = Grid::<f64>::new(n).unwrap();
        let dx = g.dx();
        let raw: Vec<C> = (0..n).map(|k| C::new((k as f64).cos(), 0.3 * k as f64)).collect();
        let nrm = weighted_inner(&raw, &raw, dx).re.sqrt();
        let phi: Vec<C> = raw.iter().map(|z| z / nrm).collect();
        let w = 0.37;
        let m = ComplexMatrix::from_fn(n, |i, j| phi[i] * phi[j].conj() * w);
        let s = eig_hermitian(&m, &g).unwrap();
        assert!((s.eigenvalues[0] - w).abs() < 1e-13);
        assert!(s.eigenvalues[1..].iter().all(|l| l.abs() < 1e-13));
        let overlap = weighted_inner(&s.vectors[0], &phi, dx).norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hermitian_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1usize, 2, 3, 6, 17] {
            let g = Grid::<f64>::new(n).unwrap();
            let m = random_hermitian(n, &mut rng);
            let s = eig_hermitian(&m, &g).unwrap();
            assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            let dx = g.dx();
            let rebuilt = ComplexMatrix::from_fn(n, |i, j| {
                s.eigenvalues.iter().zip(&s.vectors).map(|(l, v)| v[i] * v[j].conj() * *l).sum::<C>()
            });
            assert!(rebuilt.max_abs_diff(&m) < 1e-10, "n = {n}");
            for (p, v) in s.vectors.iter().enumerate() {
                for (q, w) in s.vectors.iter().enumerate() {
                    let ip = weighted_inner(v, w, dx);
                    let e = if p == q { 1.0 } else { 0.0 };
                    assert!((ip - C::new(e, 0.0)).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn hermitian_and_tridiagonal_agree() {
        let n = 12;
        let g = Grid::<f64>::new(n).unwrap();
        let op = neumann_laplacian(&g).unwrap().scaled(-0.01).with_diagonal_added(&g.nodes());
        let tri = eig_sym_tridiag(&op, &g).unwrap();
        let dense = hermitian_eigen_euclidean(&ComplexMatrix::from_real_dense(&op.to_dense())).unwrap();
        for (a, b) in tri.eigenvalues.iter().zip(&dense.eigenvalues) {
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn complex_tridiag_scalar_inverse() {
        let n = 6;
        let a = ComplexTridiagonal {
            lower: vec![C::new(0.0, 0.0); n - 1],
            diag: vec![C::new(0.0, 1.0); n],
            upper: vec![C::new(0.0, 0.0); n - 1],
        };
        let b: Vec<C> = (0..n).map(|k| C::new(k as f64, 1.0)).collect();
        let x = solve_complex_tridiag(&a, &b).unwrap();
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi * C::new(0.0, -1.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn complex_tridiag_matches_real_thomas() {
        let g = Grid::<f64>::new(9).unwrap();
        let op = dirichlet_laplacian(&g).unwrap().scaled(-1.0);
        let rhs: Vec<f64> = (0..9).map(|k| (k as f64).sin()).collect();
        let real = crate::grid::solve_tridiagonal(&op, &rhs).unwrap();
        let cop = ComplexTridiagonal::from_real(&op, C::new(0.0, 0.0), C::new(1.0, 0.0));
        let crhs: Vec<C> = rhs.iter().map(|&r| C::new(r, 0.0)).collect();
        let x = solve_complex_tridiag(&cop, &crhs).unwrap();
        for (a, b) in x.iter().zip(&real) {
            assert!((a.re - b).abs() < 1e-12 * b.abs().max(1.0) && a.im.abs() < 1e-14);
        }
    }

    #[test]
    fn complex_tridiag_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 8;
        let rnd = |rng: &mut ChaCha8Rng| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let lower: Vec<C> = (0..n - 1).map(|_| rnd(&mut rng)).collect();
        let upper: Vec<C> = (0..n - 1).map(|_| rnd(&mut rng)).collect();
        let diag: Vec<C> = (0..n).map(|_| rnd(&mut rng) + C::new(4.0, 0.0)).collect();
        let a = ComplexTridiagonal { lower, diag, upper };
        let b: Vec<C> = (0..n).map(|_| rnd(&mut rng)).collect();
        let x = solve_complex_tridiag(&a, &b).unwrap();

        // dense Gaussian elimination with partial pivoting
        let mut m: Vec<Vec<C>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            a.diag[i]
                        } else if j + 1 == i {
                            a.lower[j]
                        } else if i + 1 == j {
                            a.upper[i]
                        } else {
                            C::new(0.0, 0.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let mut rhs = b.clone();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| m[i][k].norm().partial_cmp(&m[j][k].norm()).unwrap()).unwrap();
            m.swap(k, p);
            rhs.swap(k, p);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..n {
                    let t = m[k][j];
                    m[i][j] -= f * t;
                }
                let t = rhs[k];
                rhs[i] -= f * t;
            }
        }
        let mut oracle = vec![C::new(0.0, 0.0); n];
        for i in (0..n).rev() {
            let s: C = (i + 1..n).map(|j| m[i][j] * oracle[j]).sum();
            oracle[i] = (rhs[i] - s) / m[i][i];
        }
        for (a_, b_) in x.iter().zip(&oracle) {
            assert!((a_ - b_).norm() < 1e-12 * b_.norm().max(1.0));
        }
        let res: f64 = a.apply(&x).iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        let bn: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(res / bn < 1e-12);
    }

    #[test]
    fn complex_tridiag_zero_pivot() {
        let a = ComplexTridiagonal {
            lower: vec![C::new(1.0, 0.0)],
            diag: vec![C::new(0.0, 0.0), C::new(1.0, 0.0)],
            upper: vec![C::new(1.0, 0.0)],
        };
        assert!(matches!(solve_complex_tridiag(&a, &[C::new(1.0, 0.0); 2]), Err(Error::ZeroPivot { row: 0 })));
    }
}
