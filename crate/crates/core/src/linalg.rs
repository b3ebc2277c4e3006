//! Small dense complex matrices (dimension 2 or 3) and Hermitian
//! eigendecomposition by complex Jacobi rotations.
//!
//! For a 2x2 matrix a single rotation diagonalizes exactly, so the 2-level
//! case is closed form; 3x3 matrices use cyclic sweeps.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{MctError, Result};

pub const MAX_DIM: usize = 3;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major square matrix with `dim` in `1..=3`.
#[derive(Clone, Copy, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: [[Complex64; MAX_DIM]; MAX_DIM],
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[Complex64]> = (0..self.dim).map(|r| &self.data[r][..self.dim]).collect();
        f.debug_struct("ComplexMatrix")
            .field("dim", &self.dim)
            .field("rows", &rows)
            .finish()
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "matrix dimension {dim} out of range");
        Self {
            dim,
            data: [[ZERO; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i][i] = ONE;
        }
        m
    }

    /// Builds a matrix from complex rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let mut m = Self::zeros(rows.len());
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), rows.len(), "matrix must be square");
            m.data[r][..row.len()].copy_from_slice(row);
        }
        m
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.data[i][i] = Complex64::new(v, 0.0);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        debug_assert!(row < self.dim && col < self.dim);
        self.data[row][col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        debug_assert!(row < self.dim && col < self.dim);
        self.data[row][col] = value;
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        (0..self.dim).map(|r| self.data[r][..self.dim].to_vec()).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                out.data[r][c] = self.data[c][r].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for r in 0..self.dim {
            for c in 0..self.dim {
                out.data[r][c] *= s;
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.data[r][c] * v[c]).sum())
            .collect()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in 0..self.dim {
                worst = worst.max((self.data[r][c] - other.data[r][c]).norm());
            }
        }
        worst
    }

    /// Largest entrywise modulus of `M - M†`.
    pub fn hermitian_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// Largest entrywise modulus of `U†U - I`.
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint() * *self).max_abs_diff(&Self::identity(self.dim))
    }
}

impl Mul for ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for r in 0..n {
            for c in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += self.data[r][k] * rhs.data[k][c];
                }
                out.data[r][c] = acc;
            }
        }
        out
    }
}

impl Add for ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        let mut out = self;
        for r in 0..self.dim {
            for c in 0..self.dim {
                out.data[r][c] += rhs.data[r][c];
            }
        }
        out
    }
}

impl Sub for ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: ComplexMatrix) -> ComplexMatrix {
        self + rhs.scale(-1.0)
    }
}

/// `H = V diag(values) V†` with orthonormal eigenvector columns in `vectors`.
#[derive(Debug, Clone, Copy)]
pub struct HermitianEigen {
    pub values: [f64; MAX_DIM],
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `exp(-i H t) = V diag(exp(-i λ t)) V†`.
    pub fn evolve(&self, t: f64) -> ComplexMatrix {
        let n = self.vectors.dim;
        let v = &self.vectors.data;
        let phases: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(1.0, -self.values[k] * t))
            .collect();
        let mut out = ComplexMatrix::zeros(n);
        for r in 0..n {
            for c in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += v[r][k] * phases[k] * v[c][k].conj();
                }
                out.data[r][c] = acc;
            }
        }
        out
    }
}

/// Asymmetry above which a matrix is rejected as non-Hermitian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

const MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a Hermitian matrix of dimension at most 3.
pub fn eigh(h: &ComplexMatrix) -> Result<HermitianEigen> {
    let defect = h.hermitian_defect();
    if defect > HERMITIAN_TOLERANCE || !defect.is_finite() {
        return Err(MctError::Numeric(format!(
            "matrix is not Hermitian (asymmetry {defect:e})"
        )));
    }
    let n = h.dim;
    // Symmetrize so the rotations see an exactly Hermitian matrix.
    let mut a = ComplexMatrix::zeros(n);
    for r in 0..n {
        a.data[r][r] = Complex64::new(h.data[r][r].re, 0.0);
        for c in (r + 1)..n {
            let v = 0.5 * (h.data[r][c] + h.data[c][r].conj());
            a.data[r][c] = v;
            a.data[c][r] = v.conj();
        }
    }
    let mut vectors = ComplexMatrix::identity(n);
    let scale = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| a.data[r][c].norm())
        .fold(0.0f64, f64::max);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|r| ((r + 1)..n).map(move |c| (r, c)))
            .map(|(r, c)| a.data[r][c].norm_sqr())
            .sum();
        if off == 0.0 || off.sqrt() <= f64::EPSILON * 1e-3 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut vectors, p, q);
            }
        }
    }

    let mut values = [0.0; MAX_DIM];
    for (k, v) in values.iter_mut().enumerate().take(n) {
        *v = a.data[k][k].re;
    }
    Ok(HermitianEigen { values, vectors })
}

/// One complex Jacobi rotation annihilating `a[p][q]`; accumulates the
/// rotation into `v` so that `H = V A V†` holds throughout.
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a.data[p][q];
    let b = apq.norm();
    if b == 0.0 {
        return;
    }
    // Phase on column q makes the pivot real: (P† A P)[p][q] = |apq|.
    let phase = apq.conj() / b;
    let app = a.data[p][p].re;
    let aqq = a.data[q][q].re;
    let zeta = (aqq - app) / (2.0 * b);
    let t = if zeta == 0.0 {
        1.0
    } else {
        zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // W = P J, with P = diag(.., phase at q, ..) and the real rotation
    // J[p][p] = c, J[q][q] = c, J[p][q] = s, J[q][p] = -s.
    let n = a.dim;
    let mut w = ComplexMatrix::identity(n);
    w.data[p][p] = Complex64::new(c, 0.0);
    w.data[p][q] = Complex64::new(s, 0.0);
    w.data[q][p] = phase * (-s);
    w.data[q][q] = phase * c;

    let rotated = w.adjoint() * *a * w;
    *a = rotated;
    a.data[p][q] = ZERO;
    a.data[q][p] = ZERO;
    for k in 0..n {
        a.data[k][k].im = 0.0;
    }
    *v = *v * w;
}

/// `exp(-i h dt)` for Hermitian `h` and `dt >= 0`.
pub fn expm_hermitian(h: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(MctError::param(format!("time step must be finite and >= 0, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(ComplexMatrix::identity(h.dim));
    }
    Ok(eigh(h)?.evolve(dt))
}
