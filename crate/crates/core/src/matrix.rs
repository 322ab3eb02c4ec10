//! Sparse symmetric matrices in coordinate form, PSDDD classification, and
//! small dense-vector helpers.

use crate::error::{Error, Result};
use serde::Serialize;

/// Relative tolerance for floating-point equality checks throughout the crate.
pub const REL_TOL: f64 = 1e-9;

/// Classification of a symmetric matrix per diagonal-dominance structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// Non-positive off-diagonals, zero row sums.
    Laplacian,
    /// Diagonally dominant with non-negative diagonal, but not a Laplacian.
    PsdddGeneral,
    NotPsddd,
}

/// Symmetric sparse matrix. Entries are stored once per unordered pair
/// (upper triangle, `i <= j`); the full symmetric matrix is implied.
#[derive(Debug, Clone)]
pub struct SparseSymmetricMatrix {
    n: usize,
    /// Upper-triangle triplets `(i, j, value)` with `i <= j`, sorted, deduplicated.
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSymmetricMatrix {
    /// Build from triplets that may mention either or both of `(i,j)` and `(j,i)`.
    /// Mentioning both requires equal values; duplicates of the same ordered pair
    /// are an error here (use [`from_triplets_summing`] for file ingestion).
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut map: std::collections::BTreeMap<(usize, usize), (f64, bool, bool)> =
            std::collections::BTreeMap::new();
        for &(i, j, v) in triplets {
            if i >= n {
                return Err(Error::VertexOutOfRange { id: i, n });
            }
            if j >= n {
                return Err(Error::VertexOutOfRange { id: j, n });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("entry ({i},{j})")));
            }
            let key = (i.min(j), i.max(j));
            let upper = j >= i;
            let e = map.entry(key).or_insert((v, false, false));
            if upper {
                if e.1 && (e.0 - v).abs() > REL_TOL * v.abs().max(e.0.abs()) {
                    return Err(Error::Asymmetric { i, j });
                }
                e.0 = v;
                e.1 = true;
            } else {
                if e.1 && (e.0 - v).abs() > REL_TOL * v.abs().max(e.0.abs()) {
                    return Err(Error::Asymmetric { i, j });
                }
                if !e.1 {
                    e.0 = v;
                }
                e.2 = true;
            }
        }
        let entries = map
            .into_iter()
            .filter(|&(_, (v, _, _))| v != 0.0)
            .map(|((i, j), (v, _, _))| (i, j, v))
            .collect();
        Ok(SparseSymmetricMatrix { n, entries })
    }

    /// Build from upper-triangle triplets (`i <= j`), summing duplicates.
    pub fn from_upper_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut map: std::collections::BTreeMap<(usize, usize), f64> = std::collections::BTreeMap::new();
        for &(i, j, v) in triplets {
            if i >= n {
                return Err(Error::VertexOutOfRange { id: i, n });
            }
            if j >= n {
                return Err(Error::VertexOutOfRange { id: j, n });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("entry ({i},{j})")));
            }
            *map.entry((i.min(j), i.max(j))).or_insert(0.0) += v;
        }
        let entries = map
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect();
        Ok(SparseSymmetricMatrix { n, entries })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Upper-triangle view (`i <= j`), sorted by `(i, j)`.
    pub fn upper_triplets(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz_upper(&self) -> usize {
        self.entries.len()
    }

    /// Number of stored off-diagonal entries counting both (i,j) and (j,i).
    pub fn nnz_symmetric(&self) -> usize {
        self.entries
            .iter()
            .map(|&(i, j, _)| if i == j { 1 } else { 2 })
            .sum()
    }

    /// Point lookup (O(log nnz)).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        match self
            .entries
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
        {
            Ok(pos) => self.entries[pos].2,
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(i, j, v) in &self.entries {
            if i == j {
                d[i] = v;
            }
        }
        d
    }

    /// Sum of |off-diagonal| per row.
    pub fn offdiag_abs_row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for &(i, j, v) in &self.entries {
            if i != j {
                s[i] += v.abs();
                s[j] += v.abs();
            }
        }
        s
    }

    /// y = A x (exact sparse multiply).
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        let mut y = vec![0.0; self.n];
        for &(i, j, v) in &self.entries {
            if i == j {
                y[i] += v * x[i];
            } else {
                y[i] += v * x[j];
                y[j] += v * x[i];
            }
        }
        Ok(y)
    }

    /// Classify per diagonal-dominance structure, with relative tolerance
    /// [`REL_TOL`] on the defining inequalities.
    pub fn classification(&self) -> Classification {
        let diag = self.diagonal();
        let off = self.offdiag_abs_row_sums();
        let mut scale: f64 = 0.0;
        for &(_, _, v) in &self.entries {
            scale = scale.max(v.abs());
        }
        let tol = REL_TOL * scale.max(1e-300);

        let mut is_laplacian = true;
        for &(i, j, v) in &self.entries {
            if i != j && v > tol {
                is_laplacian = false;
                break;
            }
        }
        if is_laplacian {
            for i in 0..self.n {
                // row sum zero <=> diag equals |off| row sum for non-positive offs
                if (diag[i] - off[i]).abs() > tol {
                    is_laplacian = false;
                    break;
                }
            }
        }
        if is_laplacian {
            return Classification::Laplacian;
        }

        let mut is_psddd = true;
        for i in 0..self.n {
            if diag[i] < -tol || diag[i] + tol < off[i] {
                is_psddd = false;
                break;
            }
        }
        if is_psddd {
            Classification::PsdddGeneral
        } else {
            Classification::NotPsddd
        }
    }

    /// Dense copy (for oracles and small direct solves).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
            if i != j {
                m[(j, i)] = v;
            }
        }
        m
    }

    /// A + diag(d).
    pub fn add_diagonal(&self, d: &[f64]) -> Result<Self> {
        if d.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: d.len() });
        }
        let mut triplets: Vec<(usize, usize, f64)> = self.entries.clone();
        for (i, &di) in d.iter().enumerate() {
            if di != 0.0 {
                triplets.push((i, i, di));
            }
        }
        Self::from_upper_triplets(self.n, &triplets)
    }
}

/// Dense-vector helpers shared across the crate. Vectors are plain `Vec<f64>`
/// with finite entries.
pub mod vec {
    use super::{Error, Result};

    pub fn check_finite(x: &[f64]) -> Result<()> {
        for (i, v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("vector entry {i}")));
            }
        }
        Ok(())
    }

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn norm(a: &[f64]) -> f64 {
        dot(a, a).sqrt()
    }

    /// y += alpha * x
    pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += alpha * xi;
        }
    }

    pub fn scale(alpha: f64, x: &mut [f64]) {
        for xi in x.iter_mut() {
            *xi *= alpha;
        }
    }

    pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    /// Pairwise (cascade) summation; error grows like O(log n) rather than O(n).
    pub fn pairwise_sum(xs: &[f64]) -> f64 {
        match xs.len() {
            0 => 0.0,
            1 => xs[0],
            2 => xs[0] + xs[1],
            n => {
                let mid = n / 2;
                pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
            }
        }
    }

    /// Subtract the mean of `x` restricted to each index set.
    pub fn deflate_component_means(x: &mut [f64], components: &[Vec<usize>]) {
        for comp in components {
            if comp.is_empty() {
                continue;
            }
            let mean: f64 = comp.iter().map(|&i| x[i]).sum::<f64>() / comp.len() as f64;
            for &i in comp {
                x[i] -= mean;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;
    use proptest::prelude::*;

    #[test]
    fn classify_path_laplacian() {
        let g = WeightedGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(g.laplacian().classification(), Classification::Laplacian);
    }

    #[test]
    fn classify_psddd_general() {
        // [[2,-1],[-1,2]] has row sums 1 > 0
        let a = SparseSymmetricMatrix::from_triplets(2, &[(0, 0, 2.0), (1, 1, 2.0), (0, 1, -1.0)])
            .unwrap();
        assert_eq!(a.classification(), Classification::PsdddGeneral);
    }

    #[test]
    fn classify_not_psddd() {
        // |off| > diag
        let a = SparseSymmetricMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, 1.0), (0, 1, -2.0)])
            .unwrap();
        assert_eq!(a.classification(), Classification::NotPsddd);
    }

    #[test]
    fn asymmetric_rejected() {
        let r = SparseSymmetricMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 2.0)]);
        assert!(matches!(r, Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn apply_ones_on_laplacian_is_zero() {
        let g = WeightedGraph::new(4, &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (0, 3, 3.0)]).unwrap();
        let a = g.laplacian();
        let y = a.apply(&vec![1.0; 4]).unwrap();
        for v in y {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn apply_identity() {
        let a = SparseSymmetricMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)])
            .unwrap();
        let x = vec![3.0, -1.0, 0.5];
        assert_eq!(a.apply(&x).unwrap(), x);
    }

    #[test]
    fn apply_edge_laplacian() {
        let g = WeightedGraph::new(2, &[(0, 1, 1.0)]).unwrap();
        let y = g.laplacian().apply(&[1.0, 0.0]).unwrap();
        assert_eq!(y, vec![1.0, -1.0]);
    }

    #[test]
    fn apply_dimension_mismatch() {
        let a = SparseSymmetricMatrix::from_triplets(2, &[(0, 0, 1.0)]).unwrap();
        assert!(a.apply(&[1.0]).is_err());
    }

    proptest! {
        /// x^T L x = sum over edges of w (x_u - x_v)^2, to 1e-12 relative.
        #[test]
        fn quadratic_form_identity(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..20);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.gen::<f64>() < 0.4 {
                        edges.push((u, v, 10f64.powf(rng.gen_range(-3.0..3.0))));
                    }
                }
            }
            prop_assume!(!edges.is_empty());
            let g = WeightedGraph::new(n, &edges).unwrap();
            let a = g.laplacian();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ax = a.apply(&x).unwrap();
            let quad = vec::dot(&x, &ax);
            let by_edges: f64 = edges.iter().map(|&(u, v, w)| w * (x[u] - x[v]).powi(2)).sum();
            let scale = quad.abs().max(by_edges.abs()).max(1e-30);
            prop_assert!((quad - by_edges).abs() <= 1e-12 * scale);
            prop_assert!(quad >= -1e-12 * scale);
        }

        /// apply is linear to 1e-12 relative.
        #[test]
        fn apply_linearity(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..15);
            let mut triplets = Vec::new();
            for i in 0..n {
                triplets.push((i, i, rng.gen_range(0.0..4.0)));
                for j in (i + 1)..n {
                    if rng.gen::<f64>() < 0.3 {
                        triplets.push((i, j, rng.gen_range(-1.0..1.0)));
                    }
                }
            }
            let a = SparseSymmetricMatrix::from_triplets(n, &triplets).unwrap();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (al, be) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mixed: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| al * xi + be * yi).collect();
            let lhs = a.apply(&mixed).unwrap();
            let ax = a.apply(&x).unwrap();
            let ay = a.apply(&y).unwrap();
            for i in 0..n {
                let rhs = al * ax[i] + be * ay[i];
                let scale = lhs[i].abs().max(rhs.abs()).max(1.0);
                prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * scale);
            }
        }
    }
}
