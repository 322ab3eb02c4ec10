//! Normalization of an arbitrary PSDDD system to connected Laplacian(+excess)
//! systems, and the back-maps that recover the original solution.
//!
//! The reduction order is fixed: diagonal-excess split, then Gremban cover
//! (only when positive off-diagonals exist), then component split. Excess is
//! carried alongside each emitted Laplacian rather than folded into it, so the
//! preconditioner can absorb `diag(d)` before elimination.

use crate::error::{Error, Result};
use crate::graph::{graph_of, WeightedGraph};
use crate::matrix::{vec, Classification, SparseSymmetricMatrix, REL_TOL};

/// Bookkeeping for undoing a reduction.
#[derive(Debug, Clone)]
pub struct ReductionPlan {
    /// Entrywise non-negative excess `d` with `input = a0 + diag(d)` (post-Gremban indices).
    pub diagonal_excess: Vec<f64>,
    pub gremban_applied: bool,
    /// Vertex sets of the emitted systems, as indices into the (possibly covered) space.
    pub component_map: Vec<Vec<usize>>,
    pub original_dimension: usize,
}

/// One emitted connected system.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// Laplacian part (exactly diagonally dominant; zero row sums).
    pub laplacian: SparseSymmetricMatrix,
    /// Graph of the Laplacian part.
    pub graph: WeightedGraph,
    /// Non-negative diagonal excess; the actual operator is `laplacian + diag(excess)`.
    pub excess: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Original (cover-space) index of each local vertex.
    pub vertices: Vec<usize>,
    /// True when the system is singular (no excess anywhere in the component).
    pub singular: bool,
    /// True when this component lives inside a Gremban cover of the input.
    pub gremban: bool,
}

impl ReducedSystem {
    /// The full operator `laplacian + diag(excess)`.
    pub fn operator(&self) -> SparseSymmetricMatrix {
        self.laplacian
            .add_diagonal(&self.excess)
            .expect("excess has matching dimension")
    }
}

/// Classify a symmetric matrix (see [`Classification`]).
pub fn classify(a: &SparseSymmetricMatrix) -> Classification {
    a.classification()
}

/// Split `a = a0 + diag(d)` where `a0` satisfies `A_ii = Σ_j≠i |A_ij|` and `d ≥ 0`.
///
/// The split is constructed so that `a0 + diag(d)` reconstructs `a` bit-exactly
/// and re-splitting `a0` yields `d = 0` (idempotence): an excess below a few
/// ulps of the diagonal is clamped to zero, and the emitted diagonal of `a0`
/// is nudged within one ulp when needed so the reconstruction identity holds.
pub fn split_diagonal_excess(
    a: &SparseSymmetricMatrix,
) -> Result<(SparseSymmetricMatrix, Vec<f64>)> {
    if a.classification() == Classification::NotPsddd {
        return Err(Error::NotPsddd("cannot split diagonal excess".into()));
    }
    let n = a.dimension();
    let diag = a.diagonal();
    let off = a.offdiag_abs_row_sums();
    let mut d = vec![0.0; n];
    let mut new_diag = vec![0.0; n];
    for i in 0..n {
        let s = diag[i];
        let mut di = s - off[i];
        // clamp float noise so the split is idempotent on its own output
        if di <= 4.0 * f64::EPSILON * s.abs() {
            di = 0.0;
        }
        let mut a0 = s - di;
        // enforce bit-exact reconstruction a0 + di == s; one-ulp walk suffices
        // because ulp(a0) <= ulp(s) on this branch
        let mut guard = 0;
        while a0 + di != s && guard < 4 {
            let err = (a0 + di) - s;
            a0 = if err > 0.0 {
                f64::next_down(a0)
            } else {
                f64::next_up(a0)
            };
            guard += 1;
        }
        debug_assert_eq!(a0 + di, s);
        d[i] = di;
        new_diag[i] = a0;
    }
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(a.nnz_upper());
    for &(i, j, v) in a.upper_triplets() {
        if i != j {
            triplets.push((i, j, v));
        }
    }
    for (i, &v) in new_diag.iter().enumerate() {
        if v != 0.0 {
            triplets.push((i, i, v));
        }
    }
    let a0 = SparseSymmetricMatrix::from_upper_triplets(n, &triplets)?;
    Ok((a0, d))
}

/// Gremban's doubling transform: for PSDDD `a = D + A_n + A_p` (diagonal,
/// negative off-diagonals, positive off-diagonals) build
/// `[[D + A_n, -A_p], [-A_p, D + A_n]]`, whose solution on rhs `(b, -b)`
/// satisfies `x' = -x`.
pub fn gremban_cover(a: &SparseSymmetricMatrix) -> Result<(SparseSymmetricMatrix, ReductionPlan)> {
    let n = a.dimension();
    let diag = a.diagonal();
    let off = a.offdiag_abs_row_sums();
    for i in 0..n {
        let tol = REL_TOL * diag[i].abs().max(off[i]);
        if diag[i] + tol < off[i] {
            return Err(Error::NotPsddd(format!("row {i} not diagonally dominant")));
        }
    }
    let mut triplets = Vec::with_capacity(a.nnz_upper() * 2);
    for &(i, j, v) in a.upper_triplets() {
        if i == j {
            triplets.push((i, i, v));
            triplets.push((i + n, i + n, v));
        } else if v < 0.0 {
            // same-copy edges
            triplets.push((i, j, v));
            triplets.push((i + n, j + n, v));
        } else {
            // cross-copy edges; no (i, i+n) edge can arise since i != j
            triplets.push((i, j + n, -v));
            triplets.push((j, i + n, -v));
        }
    }
    let cover = SparseSymmetricMatrix::from_upper_triplets(2 * n, &triplets)?;
    let mut excess = vec![0.0; 2 * n];
    for i in 0..n {
        let e = (diag[i] - off[i]).max(0.0);
        excess[i] = e;
        excess[i + n] = e;
    }
    let plan = ReductionPlan {
        diagonal_excess: excess,
        gremban_applied: true,
        component_map: Vec::new(),
        original_dimension: n,
    };
    Ok((cover, plan))
}

/// Reduce `(a, b)` to a list of connected Laplacian(+excess) systems whose
/// solutions compose (via [`ReductionPlan`] and [`recover_solution`]) to a
/// solution of `a x = b`.
pub fn reduce(
    a: &SparseSymmetricMatrix,
    b: &[f64],
) -> Result<(Vec<ReducedSystem>, ReductionPlan)> {
    if b.len() != a.dimension() {
        return Err(Error::DimensionMismatch { expected: a.dimension(), got: b.len() });
    }
    vec::check_finite(b)?;
    let class = a.classification();
    if class == Classification::NotPsddd {
        return Err(Error::NotPsddd("reduce rejects non-PSDDD input".into()));
    }

    // 1) excess split
    let (a0, d) = split_diagonal_excess(a)?;

    // 2) Gremban cover when positive off-diagonals exist
    let has_positive_off = a0.upper_triplets().iter().any(|&(i, j, v)| i != j && v > 0.0);
    let (lap_all, excess_all, rhs_all, gremban) = if has_positive_off {
        let (cover0, _) = gremban_cover(&a0)?;
        let n = a.dimension();
        let mut excess = vec![0.0; 2 * n];
        let mut rhs = vec![0.0; 2 * n];
        for i in 0..n {
            excess[i] = d[i];
            excess[i + n] = d[i];
            rhs[i] = b[i];
            rhs[i + n] = -b[i];
        }
        (cover0, excess, rhs, true)
    } else {
        (a0, d, b.to_vec(), false)
    };

    // 3) component split
    let graph = graph_of(&lap_all)?;
    let (comp_of, n_comp) = graph.components();
    let mut comp_vertices: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    for (v, &c) in comp_of.iter().enumerate() {
        comp_vertices[c].push(v);
    }

    let mut systems = Vec::with_capacity(n_comp);
    for (ci, verts) in comp_vertices.iter().enumerate() {
        let mut local_of = std::collections::HashMap::new();
        for (li, &v) in verts.iter().enumerate() {
            local_of.insert(v, li);
        }
        let mut edges = Vec::new();
        for e in graph.edges() {
            if comp_of[e.u] == ci {
                edges.push((local_of[&e.u], local_of[&e.v], e.w));
            }
        }
        let sub = WeightedGraph::new(verts.len(), &edges)?;
        let lap = sub.laplacian();
        let excess: Vec<f64> = verts.iter().map(|&v| excess_all[v]).collect();
        let rhs: Vec<f64> = verts.iter().map(|&v| rhs_all[v]).collect();
        let total_excess: f64 = excess.iter().sum();
        let scale: f64 = lap
            .diagonal()
            .iter()
            .fold(0.0f64, |m, &x| m.max(x.abs()))
            .max(total_excess);
        let singular = total_excess <= REL_TOL * scale.max(1e-300);
        if singular {
            // rhs must be orthogonal to the component-constant vector
            let dot: f64 = rhs.iter().sum();
            let norm = vec::norm(&rhs);
            if dot.abs() > 1e-9 * norm.max(1e-300) && norm > 0.0 {
                return Err(Error::RhsNotInRange { component: ci, dot });
            }
        }
        systems.push(ReducedSystem {
            laplacian: lap,
            graph: sub,
            excess,
            rhs,
            vertices: verts.clone(),
            singular,
            gremban,
        });
    }

    let plan = ReductionPlan {
        diagonal_excess: excess_all,
        gremban_applied: gremban,
        component_map: comp_vertices,
        original_dimension: a.dimension(),
    };
    Ok((systems, plan))
}

/// Scatter per-system solutions back to a solution of the original system.
pub fn recover_solution(plan: &ReductionPlan, solutions: &[(Vec<f64>, &[usize])]) -> Vec<f64> {
    let cover_dim = if plan.gremban_applied {
        2 * plan.original_dimension
    } else {
        plan.original_dimension
    };
    let mut full = vec![0.0; cover_dim];
    for (x, verts) in solutions {
        for (li, &v) in verts.iter().enumerate() {
            full[v] = x[li];
        }
    }
    if plan.gremban_applied {
        let n = plan.original_dimension;
        // antisymmetric recovery: x = (top - bottom) / 2
        (0..n).map(|i| 0.5 * (full[i] - full[i + n])).collect()
    } else {
        full
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;

    fn dense_solve(a: &SparseSymmetricMatrix, b: &[f64]) -> Vec<f64> {
        crate::dense::solve_psd_dense(a, b).unwrap()
    }

    #[test]
    fn split_laplacian_is_identity() {
        let g = WeightedGraph::new(3, &[(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        let a = g.laplacian();
        let (a0, d) = split_diagonal_excess(&a).unwrap();
        assert!(d.iter().all(|&x| x == 0.0));
        assert_eq!(a0.upper_triplets(), a.upper_triplets());
    }

    #[test]
    fn split_hand_example() {
        // [[3,-1],[-1,2]] -> d = (2,1), a0 = [[1,-1],[-1,1]]
        let a = SparseSymmetricMatrix::from_triplets(2, &[(0, 0, 3.0), (1, 1, 2.0), (0, 1, -1.0)])
            .unwrap();
        let (a0, d) = split_diagonal_excess(&a).unwrap();
        assert_eq!(d, vec![2.0, 1.0]);
        assert_eq!(a0.get(0, 0), 1.0);
        assert_eq!(a0.get(1, 1), 1.0);
        assert_eq!(a0.get(0, 1), -1.0);
    }

    #[test]
    fn split_reconstructs_bit_exact_and_idempotent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let n = 20;
            let mut triplets = Vec::new();
            let mut row_abs = vec![0.0f64; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen::<f64>() < 0.3 {
                        let v: f64 = rng.gen_range(-1.0..1.0) * 10f64.powf(rng.gen_range(-2.0..2.0));
                        triplets.push((i, j, v));
                        row_abs[i] += v.abs();
                        row_abs[j] += v.abs();
                    }
                }
            }
            for i in 0..n {
                triplets.push((i, i, row_abs[i] * (1.0 + rng.gen::<f64>())));
            }
            let a = SparseSymmetricMatrix::from_triplets(n, &triplets).unwrap();
            let (a0, d) = split_diagonal_excess(&a).unwrap();
            // bit-exact reconstruction
            let rebuilt = a0.add_diagonal(&d).unwrap();
            assert_eq!(rebuilt.upper_triplets(), a.upper_triplets());
            // idempotence
            let (a00, d0) = split_diagonal_excess(&a0).unwrap();
            assert!(d0.iter().all(|&x| x == 0.0));
            assert_eq!(a00.upper_triplets(), a0.upper_triplets());
        }
    }

    #[test]
    fn gremban_no_positive_offdiag_is_block_diag() {
        let a = SparseSymmetricMatrix::from_triplets(2, &[(0, 0, 2.0), (1, 1, 2.0), (0, 1, -1.0)])
            .unwrap();
        let (cover, _) = gremban_cover(&a).unwrap();
        assert_eq!(cover.dimension(), 4);
        assert_eq!(cover.get(0, 1), -1.0);
        assert_eq!(cover.get(2, 3), -1.0);
        assert_eq!(cover.get(0, 2), 0.0);
        assert_eq!(cover.get(0, 3), 0.0);
        assert_eq!(cover.get(1, 2), 0.0);
    }

    #[test]
    fn gremban_hand_example() {
        // [[1, 0.5],[0.5, 1]] -> 4x4 cover with edges (0,3), (1,2) of weight 0.5
        let a = SparseSymmetricMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, 1.0), (0, 1, 0.5)])
            .unwrap();
        let (cover, plan) = gremban_cover(&a).unwrap();
        assert_eq!(cover.dimension(), 4);
        assert_eq!(cover.get(0, 3), -0.5);
        assert_eq!(cover.get(1, 2), -0.5);
        assert_eq!(cover.get(0, 1), 0.0);
        assert_eq!(cover.get(2, 3), 0.0);
        assert!(plan.gremban_applied);
        // no vertical (i, i+n) edges
        assert_eq!(cover.get(0, 2), 0.0);
        assert_eq!(cover.get(1, 3), 0.0);
    }

    #[test]
    fn gremban_cover_edge_conditions() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        let mut triplets = Vec::new();
        let mut row_abs = vec![0.0f64; n];
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < 0.4 {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    triplets.push((i, j, v));
                    row_abs[i] += v.abs();
                    row_abs[j] += v.abs();
                }
            }
        }
        for i in 0..n {
            triplets.push((i, i, row_abs[i] + rng.gen::<f64>()));
        }
        let a = SparseSymmetricMatrix::from_triplets(n, &triplets).unwrap();
        let (cover, _) = gremban_cover(&a).unwrap();
        // cover is PSDDD with non-positive off-diagonals
        for &(i, j, v) in cover.upper_triplets() {
            if i != j {
                assert!(v <= 0.0);
            }
        }
        assert_ne!(cover.classification(), Classification::NotPsddd);
        // the three Gremban-cover edge conditions
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert_eq!(cover.get(i, j), cover.get(i + n, j + n));
                    assert_eq!(cover.get(i, j + n), cover.get(i + n, j));
                }
            }
            assert_eq!(cover.get(i, i + n), 0.0);
        }
    }

    #[test]
    fn reduce_connected_laplacian_single_system() {
        let g = WeightedGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let a = g.laplacian();
        let b = vec![1.0, 0.0, -1.0];
        let (systems, plan) = reduce(&a, &b).unwrap();
        assert_eq!(systems.len(), 1);
        assert!(!plan.gremban_applied);
        assert_eq!(systems[0].vertices, vec![0, 1, 2]);
        assert!(systems[0].singular);
    }

    #[test]
    fn reduce_two_components() {
        let g = WeightedGraph::new(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let a = g.laplacian();
        let b = vec![1.0, -1.0, 2.0, -2.0];
        let (systems, _) = reduce(&a, &b).unwrap();
        assert_eq!(systems.len(), 2);
    }

    #[test]
    fn reduce_rejects_incompatible_rhs() {
        let g = WeightedGraph::new(2, &[(0, 1, 1.0)]).unwrap();
        let a = g.laplacian();
        let r = reduce(&a, &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::RhsNotInRange { .. })));
    }

    #[test]
    fn reduce_rejects_not_psddd() {
        let a = SparseSymmetricMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, 1.0), (0, 1, -2.0)])
            .unwrap();
        assert!(reduce(&a, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn gremban_end_to_end_vs_dense() {
        // PSDDD with positive off-diagonals and excess; solve the cover systems
        // densely, recover, and compare against a dense solve of the original.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let n = 8 + (trial % 5);
            let mut triplets = Vec::new();
            let mut row_abs = vec![0.0f64; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen::<f64>() < 0.5 {
                        let v: f64 = rng.gen_range(-1.0..1.0);
                        triplets.push((i, j, v));
                        row_abs[i] += v.abs();
                        row_abs[j] += v.abs();
                    }
                }
            }
            for i in 0..n {
                // strict excess so the system is nonsingular
                triplets.push((i, i, row_abs[i] + 0.1 + rng.gen::<f64>()));
            }
            let a = SparseSymmetricMatrix::from_triplets(n, &triplets).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (systems, plan) = reduce(&a, &b).unwrap();
            let sols: Vec<(Vec<f64>, &[usize])> = systems
                .iter()
                .map(|s| (dense_solve(&s.operator(), &s.rhs), s.vertices.as_slice()))
                .collect();
            let x = recover_solution(&plan, &sols);
            let x_star = dense_solve(&a, &b);
            let err = vec::norm(&vec::sub(&x, &x_star)) / vec::norm(&x_star).max(1e-300);
            assert!(err < 1e-8, "trial {trial}: relative error {err}");
        }
    }
}
