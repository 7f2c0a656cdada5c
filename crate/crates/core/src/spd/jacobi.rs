//! Cyclic Jacobi eigendecomposition for small dense symmetric matrices.

use super::{Matrix, SymMatrix};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_RTOL: f64 = 1e-14;

/// Eigenpairs of a symmetric matrix, `A = V · diag(values) · Vᵀ`.
///
/// Eigenvalues are sorted ascending; column `k` of `vectors` belongs to
/// `values[k]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Rebuilds `V · diag(f(λ)) · Vᵀ`, symmetrized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += v[(i, k)] * mapped[k] * v[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        SymMatrix::from_symmetric_unchecked(out)
    }

    /// Applies `V · diag(f(λ)) · Vᵀ` to a vector without forming the matrix.
    pub fn apply(&self, f: impl Fn(f64) -> f64, b: &[f64]) -> Vec<f64> {
        let n = self.values.len();
        let v = &self.vectors;
        let mut coeffs = vec![0.0; n];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..n {
                s += v[(i, k)] * b[i];
            }
            *c = s * f(self.values[k]);
        }
        (0..n)
            .map(|i| (0..n).map(|k| v[(i, k)] * coeffs[k]).sum())
            .collect()
    }
}

/// Diagonalizes `a` by cyclic Jacobi rotations.
///
/// Sweeps stop once the largest off-diagonal magnitude drops below
/// `1e-14 · Σ|a_ii|` (Frobenius norm when the diagonal vanishes).
pub fn jacobi_eigen(a: &SymMatrix) -> SymEigen {
    let n = a.dim();
    let mut m = a.to_matrix();
    let mut v = Matrix::identity(n);

    let diag_scale: f64 = (0..n).map(|i| m[(i, i)].abs()).sum();
    let scale = if diag_scale > 0.0 {
        diag_scale
    } else {
        m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let threshold = OFF_DIAGONAL_RTOL * scale;

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(m[(p, q)].abs());
            }
        }
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    SymEigen { values, vectors }
}
