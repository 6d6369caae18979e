//! Dense matrix helpers shared by the kernel modules.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Tolerance on `|M - M^T|` accepted by symmetric-input operations.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// All-ones `n x n` matrix.
pub fn ones(n: usize) -> Mat {
    Mat::from_element(n, n, 1.0)
}

pub fn ensure_square(m: &Mat) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn max_asymmetry(m: &Mat) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Square and symmetric within [`SYMMETRY_TOL`].
pub fn ensure_symmetric(m: &Mat) -> Result<usize> {
    let n = ensure_square(m)?;
    let dev = max_asymmetry(m);
    if !(dev <= SYMMETRY_TOL) {
        return Err(Error::Asymmetric { max_deviation: dev });
    }
    Ok(n)
}

/// Replace `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn symmetrized(mut m: Mat) -> Mat {
    symmetrize(&mut m);
    m
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = symmetrized(m.clone());
    let mut vals: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn frobenius_distance(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm()
}

pub fn relative_frobenius(estimate: &Mat, reference: &Mat) -> f64 {
    let denom = reference.norm();
    if denom == 0.0 {
        estimate.norm()
    } else {
        frobenius_distance(estimate, reference) / denom
    }
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Submatrix `m[rows, cols]`.
pub fn select(m: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn select_vec(v: &Vector, idx: &[usize]) -> Vector {
    Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Eigendecomposition of a symmetric matrix, kept around so that functions
/// of the matrix (exponential, pseudo-inverse) share one factorization.
#[derive(Debug, Clone)]
pub struct SymmetricSpectrum {
    pub values: Vector,
    pub vectors: Mat,
}

impl SymmetricSpectrum {
    pub fn new(m: &Mat) -> Result<Self> {
        ensure_symmetric(m)?;
        let eig = symmetrized(m.clone()).symmetric_eigen();
        Ok(SymmetricSpectrum {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `V diag(f(lambda)) V^T`, symmetrized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        symmetrized(&scaled * self.vectors.transpose())
    }

    /// Eigenvalues retained by a pseudo-inverse with relative cutoff
    /// `rel_tol * max(|lambda|)`.
    pub fn cutoff(&self, rel_tol: f64) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        rel_tol * scale
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        let cut = self.cutoff(rel_tol);
        self.values.iter().filter(|v| v.abs() > cut).count()
    }

    pub fn pseudo_inverse(&self, rel_tol: f64) -> Mat {
        let cut = self.cutoff(rel_tol);
        self.map(|v| if v.abs() > cut { 1.0 / v } else { 0.0 })
    }

    /// Symmetric square root with negative eigenvalues clipped to zero.
    pub fn psd_sqrt_factor(&self) -> Mat {
        let mut f = self.vectors.clone();
        for j in 0..self.dim() {
            let s = math::sqrt(self.values[j].max(0.0));
            f.column_mut(j).scale_mut(s);
        }
        f
    }
}

/// Lower-triangular factor `L` with `L L^T = m`; retries once with a
/// `1e-12 * max(1, max diag)` jitter and finally falls back to a clipped
/// eigen factor for PSD-singular input.
pub fn gaussian_factor(m: &Mat) -> Result<Mat> {
    let n = ensure_symmetric(m)?;
    let sym = symmetrized(m.clone());
    if let Some(ch) = sym.clone().cholesky() {
        return Ok(ch.unpack());
    }
    let scale = (0..n).fold(1.0f64, |acc, i| acc.max(sym[(i, i)].abs()));
    let jittered = &sym + Mat::identity(n, n) * (1e-12 * scale);
    if let Some(ch) = jittered.cholesky() {
        return Ok(ch.unpack());
    }
    Ok(SymmetricSpectrum::new(&sym)?.psd_sqrt_factor())
}
