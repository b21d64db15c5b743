//! Density operators in spectral form.

use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{weighted_inner, DensityField, Grid, Tridiagonal};
use crate::linalg::{eig_hermitian, hermitian_eigen_euclidean, ComplexMatrix};
use crate::scalar::Real;

/// Eigenvalues at or above `-CLAMP` are treated as round-off and set to zero.
const CLAMP: f64 = 1e-12;

/// Positive trace-class operator `sum_p w_p |phi_p><phi_p|`.
///
/// Modes are orthonormal in the grid inner product and sorted by decreasing
/// weight. `discarded_mass` accumulates the weight dropped by truncation over
/// the operator's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DensityOperator<T: Real> {
    grid: Grid<T>,
    weights: Vec<T>,
    modes: Vec<Vec<Complex<T>>>,
    discarded_mass: T,
}

impl<T: Real> DensityOperator<T> {
    /// Builds an operator from eigenpairs. Weights in `[-1e-12, 0)` are clamped
    /// to zero; more negative weights are rejected.
    pub fn from_spectrum(grid: Grid<T>, weights: Vec<T>, modes: Vec<Vec<Complex<T>>>) -> Result<Self> {
        if weights.len() != modes.len() {
            return Err(Error::LengthMismatch { expected: weights.len(), got: modes.len() });
        }
        for m in &modes {
            grid.check_len(m.len())?;
        }
        let clamp = T::lit(CLAMP);
        let mut pairs = Vec::with_capacity(weights.len());
        for (w, m) in weights.into_iter().zip(modes) {
            if !w.is_finite() {
                return Err(Error::NonFinite("density operator weight".into()));
            }
            if w < -clamp {
                return Err(Error::Positivity { weight: w.to_f64_lossy() });
            }
            pairs.push((w.max(T::zero()), m));
        }
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let (weights, modes) = pairs.into_iter().unzip();
        Ok(Self { grid, weights, modes, discarded_mass: T::zero() })
    }

    pub fn from_real_spectrum(grid: Grid<T>, weights: Vec<T>, modes: Vec<Vec<T>>) -> Result<Self> {
        let modes = modes
            .into_iter()
            .map(|m| m.into_iter().map(|x| Complex::new(x, T::zero())).collect())
            .collect();
        Self::from_spectrum(grid, weights, modes)
    }

    /// Diagonalizes a kernel matrix (diagonal = local density).
    pub fn from_matrix(m: &ComplexMatrix<T>, grid: Grid<T>) -> Result<Self> {
        let s = eig_hermitian(m, &grid)?;
        Self::from_spectrum(grid, s.eigenvalues, s.vectors)
    }

    pub fn empty(grid: Grid<T>) -> Self {
        Self { grid, weights: Vec::new(), modes: Vec::new(), discarded_mass: T::zero() }
    }

    /// Spectral form of `sum_p w_p |v_p><v_p|` for arbitrary (not necessarily
    /// orthogonal or normalized) vectors `v_p` and `w_p >= 0`.
    pub fn from_vectors(grid: Grid<T>, weights: Vec<T>, vectors: Vec<Vec<Complex<T>>>) -> Result<Self> {
        if weights.len() != vectors.len() {
            return Err(Error::LengthMismatch { expected: weights.len(), got: vectors.len() });
        }
        for v in &vectors {
            grid.check_len(v.len())?;
        }
        if let Some(&w) = weights.iter().find(|w| !(**w >= T::zero())) {
            return Err(Error::Positivity { weight: w.to_f64_lossy() });
        }
        let raw = Self { grid, weights, modes: vectors, discarded_mass: T::zero() };
        Self::empty(grid).blend(T::zero(), &raw, T::one(), T::zero())
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn modes(&self) -> &[Vec<Complex<T>>] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// An operator without modes, e.g. after truncating above its top weight.
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn discarded_mass(&self) -> T {
        self.discarded_mass
    }

    pub fn with_discarded_mass(mut self, mass: T) -> Self {
        self.discarded_mass = mass;
        self
    }

    /// `n_i = sum_p w_p |phi_{p,i}|^2`.
    pub fn local_density(&self) -> DensityField<T> {
        let mut n = vec![T::zero(); self.grid.len()];
        for (w, m) in self.weights.iter().zip(&self.modes) {
            for (ni, z) in n.iter_mut().zip(m) {
                *ni = *ni + *w * z.norm_sqr();
            }
        }
        DensityField::from_raw(n)
    }

    pub fn trace(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// Drops modes with weight below `threshold`, adding their weight to the
    /// discarded-mass ledger.
    pub fn truncate(&self, threshold: T) -> Self {
        let keep = self.weights.iter().take_while(|&&w| w >= threshold).count();
        let dropped: T = self.weights[keep..].iter().copied().sum();
        Self {
            grid: self.grid,
            weights: self.weights[..keep].to_vec(),
            modes: self.modes[..keep].to_vec(),
            discarded_mass: self.discarded_mass + dropped,
        }
    }

    /// Kernel matrix `M_ij = sum_p w_p phi_{p,i} conj(phi_{p,j})`; its diagonal is
    /// the local density.
    pub fn assemble_matrix(&self) -> ComplexMatrix<T> {
        let n = self.grid.len();
        let mut m = ComplexMatrix::zeros(n);
        for (w, v) in self.weights.iter().zip(&self.modes) {
            for i in 0..n {
                let vi = v[i] * *w;
                for j in 0..n {
                    m[(i, j)] = m[(i, j)] + vi * v[j].conj();
                }
            }
        }
        m
    }

    /// `sum_p (w_p log w_p - w_p) + sum_p w_p <phi_p, H0 phi_p>`, with `0 log 0 = 0`.
    pub fn free_energy(&self, h0: &Tridiagonal<T>) -> T {
        let dx = self.grid.dx();
        let mut f = T::zero();
        for (&w, v) in self.weights.iter().zip(&self.modes) {
            if w > T::zero() {
                f = f + w * w.ln() - w;
            }
            let hv = h0.apply_complex(v);
            f = f + w * weighted_inner(v, &hv, dx).re;
        }
        f
    }

    /// Largest deviation of the Gram matrix of the modes from the identity.
    pub fn orthonormality_defect(&self) -> T {
        let dx = self.grid.dx();
        let mut worst = T::zero();
        for (p, u) in self.modes.iter().enumerate() {
            for (q, v) in self.modes.iter().enumerate().take(p + 1) {
                let ip = weighted_inner(u, v, dx);
                let target = if p == q { T::one() } else { T::zero() };
                worst = worst.max((ip - Complex::new(target, T::zero())).norm());
            }
        }
        worst
    }

    /// Applies a map to every mode, keeping the weights.
    pub fn map_modes(&self, mut f: impl FnMut(&[Complex<T>]) -> Result<Vec<Complex<T>>>) -> Result<Self> {
        let modes = self.modes.iter().map(|m| f(m)).collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: self.grid, weights: self.weights.clone(), modes, discarded_mass: self.discarded_mass })
    }

    /// Multiplies the weights by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w = *w * factor);
        out
    }

    /// Spectral form of `a * self + b * other` (`a, b >= 0`).
    ///
    /// The sum lives in the span of both mode sets, so it is diagonalized in an
    /// orthonormal basis of that span rather than on the full grid. Modes of
    /// `other` with weight below `other_cutoff` are left out and their mass
    /// is added to the discarded-mass ledger of `self`.
    pub fn blend(&self, a: T, other: &Self, b: T, other_cutoff: T) -> Result<Self> {
        let dx = self.grid.dx();
        let zero = Complex::new(T::zero(), T::zero());
        let mut basis: Vec<Vec<Complex<T>>> = self.modes.clone();
        let m1 = basis.len();
        let dependent = T::lit(1e-9);

        let mut coefficients: Vec<(T, Vec<Complex<T>>)> = Vec::new();
        let mut excluded = T::zero();
        for (&w, psi) in other.weights.iter().zip(&other.modes) {
            if w < other_cutoff || w == T::zero() {
                excluded = excluded + b * w;
                continue;
            }
            let mut r = psi.clone();
            let mut c = vec![zero; basis.len()];
            for _ in 0..2 {
                for (j, q) in basis.iter().enumerate() {
                    let proj = weighted_inner(q, &r, dx);
                    if proj != zero {
                        r.iter_mut().zip(q).for_each(|(ri, qi)| *ri = *ri - *qi * proj);
                        c[j] = c[j] + proj;
                    }
                }
            }
            let nr = weighted_inner(&r, &r, dx).re.sqrt();
            if nr > dependent {
                let inv = T::one() / nr;
                basis.push(r.into_iter().map(|z| z * inv).collect());
                c.push(Complex::new(nr, T::zero()));
            }
            coefficients.push((w, c));
        }

        let m = basis.len();
        let mut k = ComplexMatrix::zeros(m);
        for (i, &w) in self.weights.iter().enumerate().take(m1) {
            k[(i, i)] = Complex::new(a * w, T::zero());
        }
        for (w, c) in &coefficients {
            let scale = b * *w;
            for i in 0..c.len() {
                let ci = c[i] * scale;
                for j in 0..c.len() {
                    k[(i, j)] = k[(i, j)] + ci * c[j].conj();
                }
            }
        }
        let s = hermitian_eigen_euclidean(&k)?;
        let mut weights = Vec::with_capacity(m);
        let mut modes = Vec::with_capacity(m);
        let clamp = T::lit(CLAMP);
        for (lambda, z) in s.eigenvalues.into_iter().zip(s.vectors).rev() {
            if lambda < -clamp {
                return Err(Error::Positivity { weight: lambda.to_f64_lossy() });
            }
            if lambda <= T::zero() {
                continue;
            }
            let mut v = vec![zero; self.grid.len()];
            for (zj, q) in z.iter().zip(&basis) {
                if *zj != zero {
                    v.iter_mut().zip(q).for_each(|(vi, qi)| *vi = *vi + *qi * *zj);
                }
            }
            weights.push(lambda);
            modes.push(v);
        }
        Ok(Self { grid: self.grid, weights, modes, discarded_mass: self.discarded_mass + excluded })
    }

    /// Hilbert-Schmidt distance `sqrt(Tr (self - other)^2)`.
    pub fn hs_distance(&self, other: &Self) -> T {
        let dx = self.grid.dx();
        let sa: T = self.weights.iter().map(|&w| w * w).sum();
        let sb: T = other.weights.iter().map(|&w| w * w).sum();
        let mut cross = T::zero();
        for (wa, u) in self.weights.iter().zip(&self.modes) {
            for (wb, v) in other.weights.iter().zip(&other.modes) {
                cross = cross + *wa * *wb * weighted_inner(u, v, dx).norm_sqr();
            }
        }
        (sa + sb - T::lit(2.0) * cross).max(T::zero()).sqrt()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut re = Vec::with_capacity(self.len() * self.grid.len());
        let mut im = Vec::with_capacity(self.len() * self.grid.len());
        for m in &self.modes {
            for z in m {
                re.push(z.re.to_f64_lossy());
                im.push(z.im.to_f64_lossy());
            }
        }
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            grid_points: self.grid.len(),
            dx: self.grid.dx().to_f64_lossy(),
            discarded_mass: self.discarded_mass.to_f64_lossy(),
            weights: self.weights.iter().map(|w| w.to_f64_lossy()).collect(),
            modes_re: re,
            modes_im: im,
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("unsupported checkpoint format `{}`", c.format)));
        }
        let grid = Grid::new(c.grid_points)?;
        let n = c.grid_points;
        let k = c.weights.len();
        if c.modes_re.len() != n * k || c.modes_im.len() != n * k {
            return Err(Error::LengthMismatch { expected: n * k, got: c.modes_re.len().min(c.modes_im.len()) });
        }
        let modes = (0..k)
            .map(|p| (0..n).map(|i| Complex::new(T::lit(c.modes_re[p * n + i]), T::lit(c.modes_im[p * n + i]))).collect())
            .collect();
        let weights = c.weights.iter().map(|&w| T::lit(w)).collect();
        Ok(Self::from_spectrum(grid, weights, modes)?.with_discarded_mass(T::lit(c.discarded_mass)))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, &self.to_checkpoint())?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let c: Checkpoint = serde_json::from_reader(file)?;
        Self::from_checkpoint(&c)
    }
}

pub const CHECKPOINT_FORMAT: &str = "qlbgk-density-operator/1";

/// On-disk snapshot of a [`DensityOperator`].
///
/// Mode `p` occupies `modes_re[p*N .. (p+1)*N]` (and likewise `modes_im`),
/// normalized so that `dx * sum |phi|^2 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub grid_points: usize,
    pub dx: f64,
    pub discarded_mass: f64,
    pub weights: Vec<f64>,
    pub modes_re: Vec<f64>,
    pub modes_im: Vec<f64>,
}

/// External, Poisson and chemical potentials on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PotentialSet<T: Real> {
    pub v_ext: Vec<T>,
    pub v_poisson: Vec<T>,
    pub a_chem: Vec<T>,
}

impl<T: Real> PotentialSet<T> {
    pub fn new(v_ext: Vec<T>, v_poisson: Vec<T>, a_chem: Vec<T>) -> Result<Self> {
        if v_ext.len() != v_poisson.len() || v_ext.len() != a_chem.len() {
            return Err(Error::LengthMismatch { expected: v_ext.len(), got: v_poisson.len().max(a_chem.len()) });
        }
        if v_ext.iter().chain(&v_poisson).chain(&a_chem).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential".into()));
        }
        Ok(Self { v_ext, v_poisson, a_chem })
    }

    /// `W = V + V_ext`.
    pub fn electrostatic(&self) -> Vec<T> {
        self.v_poisson.iter().zip(&self.v_ext).map(|(&v, &e)| v + e).collect()
    }
}
