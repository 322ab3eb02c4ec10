//! Dense symmetric factorizations for the reduced system and for test oracles.
//!
//! The workhorse is an LDLᵀ factorization with symmetric (max-diagonal)
//! pivoting. On PSD input the pivots are non-negative; pivots that fall below
//! a relative tolerance are treated as rank deficiency, and the corresponding
//! directions are pinned (solution component zero), which for Laplacian blocks
//! amounts to grounding one vertex per component.

use crate::error::{Error, Result};
use crate::matrix::SparseSymmetricMatrix;
use nalgebra::DMatrix;

/// Pivoted dense LDLᵀ of a symmetric PSD matrix, reusable across solves.
#[derive(Debug, Clone)]
pub struct DenseLdl {
    n: usize,
    rank: usize,
    /// Unit lower-triangular factor, permuted coordinates.
    l: DMatrix<f64>,
    d: Vec<f64>,
    /// perm[k] = original index pivoted into position k.
    perm: Vec<usize>,
}

impl DenseLdl {
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
        }
        let mut work = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-300);
        let tol = 1e-12 * scale;
        let mut d = vec![0.0; n];
        let mut rank = n;

        for k in 0..n {
            // symmetric pivoting: bring the largest remaining diagonal to front
            let mut p = k;
            for i in (k + 1)..n {
                if work[(i, i)] > work[(p, p)] {
                    p = i;
                }
            }
            if p != k {
                work.swap_rows(k, p);
                work.swap_columns(k, p);
                perm.swap(k, p);
            }
            let piv = work[(k, k)];
            if piv <= tol {
                rank = k;
                break;
            }
            d[k] = piv;
            for i in (k + 1)..n {
                let lik = work[(i, k)] / piv;
                work[(i, k)] = lik;
            }
            // update the full trailing block so symmetry survives later swaps
            for j in (k + 1)..n {
                let ljk = work[(j, k)];
                if ljk == 0.0 {
                    continue;
                }
                for i in (k + 1)..n {
                    let upd = work[(i, k)] * ljk * piv;
                    work[(i, j)] -= upd;
                }
            }
        }

        let mut l = DMatrix::zeros(n, n);
        for k in 0..rank {
            l[(k, k)] = 1.0;
            for i in (k + 1)..n {
                l[(i, k)] = work[(i, k)];
            }
        }
        for k in rank..n {
            l[(k, k)] = 1.0;
        }
        Ok(DenseLdl { n, rank, l, d, perm })
    }

    pub fn from_sparse(a: &SparseSymmetricMatrix) -> Result<Self> {
        Self::factor(&a.to_dense())
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Solve `A x = b`. For rank-deficient `A`, `b` must lie in the range; the
    /// returned particular solution has zero coefficients on the deficient
    /// directions.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let n = self.n;
        // y = L^{-1} P b
        let mut y: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        for k in 0..n {
            let yk = y[k];
            if yk == 0.0 {
                continue;
            }
            for i in (k + 1)..n {
                let lik = self.l[(i, k)];
                if lik != 0.0 {
                    y[i] -= lik * yk;
                }
            }
        }
        // z = D^+ y
        let mut z = vec![0.0; n];
        for k in 0..self.rank {
            z[k] = y[k] / self.d[k];
        }
        // x' = L^{-T} z
        for k in (0..n).rev() {
            let mut s = z[k];
            for i in (k + 1)..n {
                let lik = self.l[(i, k)];
                if lik != 0.0 {
                    s -= lik * z[i];
                }
            }
            z[k] = s;
        }
        // unpermute
        let mut x = vec![0.0; n];
        for k in 0..n {
            x[self.perm[k]] = z[k];
        }
        Ok(x)
    }
}

/// One-shot dense solve of a PSD system (possibly singular, `b` in range).
pub fn solve_psd_dense(a: &SparseSymmetricMatrix, b: &[f64]) -> Result<Vec<f64>> {
    DenseLdl::from_sparse(a)?.solve(b)
}

/// Largest and smallest nonzero eigenvalues of a symmetric matrix, with a
/// relative threshold separating "zero" eigenvalues.
pub fn extreme_nonzero_eigenvalues(m: &DMatrix<f64>) -> Option<(f64, f64)> {
    let eig = m.clone().symmetric_eigenvalues();
    let max_abs = eig.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if max_abs == 0.0 {
        return None;
    }
    let tol = 1e-10 * max_abs;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &v in eig.iter() {
        if v.abs() > tol {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo.is_finite() {
        Some((lo, hi))
    } else {
        None
    }
}

/// Finite condition number (ratio of extreme nonzero eigenvalues) of a
/// symmetric PSD matrix.
pub fn kappa_f_dense(m: &DMatrix<f64>) -> Option<f64> {
    extreme_nonzero_eigenvalues(m).map(|(lo, hi)| hi / lo)
}

/// 2-norm condition number of a general square matrix via SVD.
pub fn condition_number_2(m: &DMatrix<f64>) -> f64 {
    let svd = m.clone().svd(false, false);
    let mut smin = f64::INFINITY;
    let mut smax: f64 = 0.0;
    for &s in svd.singular_values.iter() {
        smin = smin.min(s);
        smax = smax.max(s);
    }
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}
