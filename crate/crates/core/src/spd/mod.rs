//! Symmetric positive-definite matrix kernel.
//!
//! Everything here works on small dense matrices (a few dozen rows at most).
//! Eigendecompositions use cyclic Jacobi rotations, which keep symmetry
//! exact and need no external linear-algebra backend.
//!
//! A matrix counts as SPD when every eigenvalue exceeds
//! [`spd_tolerance`]`= 1e-12 · (1 + max_i a_ii)`. Nothing is clamped: a
//! caller that wants regularization adds it explicitly.

mod jacobi;
mod matrix;

use std::fmt;

use thiserror::Error;

pub use jacobi::{jacobi_eigen, SymEigen};
pub use matrix::{dot, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpdError {
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e} <= tolerance {tolerance:e})")]
    NotSpd { min_eigenvalue: f64, tolerance: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("row {row} has {found} entries, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, SpdError>;

/// Square symmetric matrix. Entries `(i, j)` and `(j, i)` are bitwise equal.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    inner: Matrix,
}

impl SymMatrix {
    /// Symmetrizes `(a + aᵀ) / 2`.
    pub fn from_matrix(a: &Matrix) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows != cols {
            return Err(SpdError::NotSquare { rows, cols });
        }
        if !a.is_finite() {
            return Err(SpdError::NonFinite);
        }
        let mut m = a.clone();
        for i in 0..rows {
            for j in i + 1..rows {
                let s = 0.5 * (a[(i, j)] + a[(j, i)]);
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        Ok(Self { inner: m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(&Matrix::from_rows(rows)?)
    }

    pub(crate) fn from_symmetric_unchecked(m: Matrix) -> Self {
        Self { inner: m }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: Matrix::identity(n),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self {
            inner: Matrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 }),
        }
    }

    /// Scalar 1×1 matrix.
    pub fn scalar(x: f64) -> Self {
        Self::diag(&[x])
    }

    pub fn dim(&self) -> usize {
        self.inner.rows()
    }

    pub fn to_matrix(&self) -> Matrix {
        self.inner.clone()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.inner.to_rows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self[(i, i)]).sum()
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.dim())
            .map(|i| self[(i, i)])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            inner: self.inner.scale(c),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<Self> {
        self.check_dim(other.dim())?;
        let n = self.dim();
        Ok(Self {
            inner: Matrix::from_fn(n, n, |i, j| self[(i, j)] + other[(i, j)]),
        })
    }

    /// `self + c·I`.
    pub fn add_diagonal(&self, c: f64) -> Self {
        let mut m = self.inner.clone();
        for i in 0..self.dim() {
            m[(i, i)] += c;
        }
        Self { inner: m }
    }

    /// Quadratic form `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        self.check_dim(y.len())?;
        Ok(x.iter()
            .enumerate()
            .map(|(i, &xi)| xi * dot(self.inner.row(i), y))
            .sum())
    }

    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        self.bilinear(x, x)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.inner.matvec(x)
    }

    /// Congruence `B · A · Bᵀ` for a `k×n` matrix `B`, symmetrized.
    pub fn congruence(&self, b: &Matrix) -> Result<SymMatrix> {
        let prod = b.matmul(&self.inner)?.matmul(&b.transpose())?;
        SymMatrix::from_matrix(&prod)
    }

    pub fn eigen(&self) -> SymEigen {
        jacobi_eigen(self)
    }

    /// Validates positive definiteness and returns the eigen factorization.
    pub fn spd_factor(&self) -> Result<SpdFactor> {
        let tolerance = spd_tolerance(self);
        let eigen = self.eigen();
        let min_eigenvalue = eigen.min_value();
        if self.dim() > 0 && !(min_eigenvalue > tolerance) {
            return Err(SpdError::NotSpd {
                min_eigenvalue,
                tolerance,
            });
        }
        Ok(SpdFactor { eigen })
    }

    pub fn is_spd(&self) -> bool {
        self.spd_factor().is_ok()
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(SpdError::DimensionMismatch {
                expected: self.dim(),
                found: n,
            });
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.inner[idx]
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym")?;
        self.inner.fmt(f)
    }
}

/// `1e-12 · (1 + largest diagonal entry)`.
pub fn spd_tolerance(a: &SymMatrix) -> f64 {
    let d = a.max_diag();
    1e-12 * (1.0 + if d.is_finite() { d.max(0.0) } else { 0.0 })
}

/// Eigen factorization of a validated SPD matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    eigen: SymEigen,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.eigen.values.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn sqrt(&self) -> SymMatrix {
        self.eigen.map(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> SymMatrix {
        self.eigen.map(|l| 1.0 / l.sqrt())
    }

    pub fn inverse(&self) -> SymMatrix {
        self.eigen.map(|l| 1.0 / l)
    }

    pub fn logdet(&self) -> f64 {
        self.eigen.values.iter().map(|l| l.ln()).sum()
    }

    /// `A⁻¹ b` without refinement.
    pub fn solve_unrefined(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(SpdError::DimensionMismatch {
                expected: self.dim(),
                found: b.len(),
            });
        }
        Ok(self.eigen.apply(|l| 1.0 / l, b))
    }

    /// `A⁻¹ B` column by column.
    pub fn solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.dim() {
            return Err(SpdError::DimensionMismatch {
                expected: self.dim(),
                found: b.rows(),
            });
        }
        let mut out = Matrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.eigen.apply(|l| 1.0 / l, &b.col(j));
            for (i, xi) in x.into_iter().enumerate() {
                out[(i, j)] = xi;
            }
        }
        Ok(out)
    }
}

/// Principal square root of an SPD matrix.
pub fn spd_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(a.spd_factor()?.sqrt())
}

/// Solves `a · x = b` for SPD `a`, with one step of iterative refinement.
pub fn spd_solve(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.dim() {
        return Err(SpdError::DimensionMismatch {
            expected: a.dim(),
            found: b.len(),
        });
    }
    let factor = a.spd_factor()?;
    let mut x = factor.solve_unrefined(b)?;
    let ax = a.matvec(&x)?;
    let residual: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
    let correction = factor.solve_unrefined(&residual)?;
    for (xi, ci) in x.iter_mut().zip(correction) {
        *xi += ci;
    }
    Ok(x)
}

/// `ln det a` for SPD `a`.
pub fn spd_logdet(a: &SymMatrix) -> Result<f64> {
    Ok(a.spd_factor()?.logdet())
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Matrix,
}

impl Cholesky {
    /// Fails with `NotSpd` when a pivot falls to `spd_tolerance(a)` or below.
    /// The reported `min_eigenvalue` is then the offending pivot, not an
    /// eigenvalue.
    pub fn new(a: &SymMatrix) -> Result<Self> {
        let n = a.dim();
        let tolerance = spd_tolerance(a);
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > tolerance) {
                return Err(SpdError::NotSpd {
                    min_eigenvalue: d,
                    tolerance,
                });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.lower.rows();
        if b.len() != n {
            return Err(SpdError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        Ok(y)
    }
}
