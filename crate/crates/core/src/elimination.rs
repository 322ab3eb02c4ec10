//! Trim-order selection (eliminate degree-1/2 vertices away from protected
//! terminals), partial LDLᵀ factorization in that order, and solves through
//! the factorization with a pluggable reduced-system backend.

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::matrix::SparseSymmetricMatrix;
use std::collections::BTreeMap;

/// Elimination order produced by [`trim`].
#[derive(Debug, Clone)]
pub struct TrimOrder {
    /// Vertices in elimination order (U).
    pub eliminated: Vec<usize>,
    /// Remaining vertices (W), sorted.
    pub remaining: Vec<usize>,
    /// The trimmed graph on the remaining vertices (degree-2 eliminations
    /// insert series edges of weight 1/(1/w1 + 1/w2), merged on collision).
    pub reduced_graph: WeightedGraph,
}

/// Compute the trim order of the graph `R ∪ S` on `n` vertices, never
/// eliminating an endpoint of an edge in `s`. With `gremban_base = Some(nb)`,
/// vertex `i` and its cover partner `i + nb` are eliminated in consecutive
/// steps whenever both are eliminable, keeping the reduced graph symmetric
/// under the cover involution.
pub fn trim(
    n: usize,
    r: &[(usize, usize, f64)],
    s: &[(usize, usize, f64)],
    gremban_base: Option<usize>,
) -> Result<TrimOrder> {
    let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let add_edge = |adj: &mut Vec<BTreeMap<usize, f64>>, u: usize, v: usize, w: f64| -> Result<()> {
        if u >= n || v >= n {
            return Err(Error::VertexOutOfRange { id: u.max(v), n });
        }
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        *adj[u].entry(v).or_insert(0.0) += w;
        *adj[v].entry(u).or_insert(0.0) += w;
        Ok(())
    };
    for &(u, v, w) in r.iter().chain(s) {
        add_edge(&mut adj, u, v, w)?;
    }
    let mut protected = vec![false; n];
    for &(u, v, _) in s {
        protected[u] = true;
        protected[v] = true;
    }

    let mut alive = vec![true; n];
    let mut eliminated = Vec::new();

    // eliminate one vertex; returns false if its degree exceeds 2
    let eliminate = |adj: &mut Vec<BTreeMap<usize, f64>>,
                     alive: &mut Vec<bool>,
                     order: &mut Vec<usize>,
                     v: usize|
     -> bool {
        let neighbors: Vec<(usize, f64)> = adj[v].iter().map(|(&u, &w)| (u, w)).collect();
        match neighbors.len() {
            0 => {}
            1 => {
                let (u, _) = neighbors[0];
                adj[u].remove(&v);
            }
            2 => {
                let (a, w1) = neighbors[0];
                let (b, w2) = neighbors[1];
                adj[a].remove(&v);
                adj[b].remove(&v);
                let w = 1.0 / (1.0 / w1 + 1.0 / w2);
                *adj[a].entry(b).or_insert(0.0) += w;
                *adj[b].entry(a).or_insert(0.0) += w;
            }
            _ => return false,
        }
        adj[v].clear();
        alive[v] = false;
        order.push(v);
        true
    };

    // run to fixpoint: degree <= 1 first, then one degree-2, repeat
    loop {
        let mut progress = false;
        if let Some(nb) = gremban_base {
            // pair-consecutive elimination over base indices
            loop {
                let mut pair_progress = false;
                for deg_cap in [1usize, 2] {
                    for i in 0..nb {
                        let j = i + nb;
                        if alive[i]
                            && alive[j]
                            && !protected[i]
                            && !protected[j]
                            && adj[i].len() <= deg_cap
                            && adj[j].len() <= deg_cap
                        {
                            let ok_i = eliminate(&mut adj, &mut alive, &mut eliminated, i);
                            debug_assert!(ok_i);
                            if alive[j] && adj[j].len() <= 2 {
                                let ok_j = eliminate(&mut adj, &mut alive, &mut eliminated, j);
                                debug_assert!(ok_j);
                            }
                            pair_progress = true;
                            progress = true;
                        }
                    }
                    if pair_progress {
                        break;
                    }
                }
                if !pair_progress {
                    break;
                }
            }
        }
        // singles (also the cleanup pass in gremban mode)
        let mut single_progress = true;
        while single_progress {
            single_progress = false;
            for v in 0..n {
                if alive[v] && !protected[v] && adj[v].len() <= 1 {
                    eliminate(&mut adj, &mut alive, &mut eliminated, v);
                    single_progress = true;
                    progress = true;
                }
            }
            if !single_progress {
                for v in 0..n {
                    if alive[v] && !protected[v] && adj[v].len() == 2 {
                        eliminate(&mut adj, &mut alive, &mut eliminated, v);
                        single_progress = true;
                        progress = true;
                        break;
                    }
                }
            }
        }
        if !progress {
            break;
        }
    }

    let remaining: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
    let mut edges = Vec::new();
    for (u, nbrs) in adj.iter().enumerate() {
        for (&v, &w) in nbrs {
            if u < v {
                edges.push((u, v, w));
            }
        }
    }
    let reduced_graph = WeightedGraph::new(n, &edges)?;
    Ok(TrimOrder { eliminated, remaining, reduced_graph })
}

/// Partial LDLᵀ factorization of a Laplacian (or Laplacian-plus-excess)
/// matrix along a trim order: `B = L·[[D,0],[0,A₁]]·Lᵀ` with unit-diagonal L.
#[derive(Debug, Clone)]
pub struct PartialFactorization {
    pub n: usize,
    /// Eliminated vertices, in order; parallel with `d`.
    pub eliminated: Vec<usize>,
    /// Remaining vertices, sorted; local index i maps to global `remaining[i]`.
    pub remaining: Vec<usize>,
    /// Strictly-lower multiplier columns of L: per eliminated vertex, the
    /// (global row, value) entries below the unit diagonal.
    pub l_cols: Vec<Vec<(usize, f64)>>,
    /// Pivots for the eliminated block.
    pub d: Vec<f64>,
    /// Pivots at (numerical) zero: grounded directions of a singular system.
    pub d_pinned: Vec<bool>,
    /// Reduced matrix over the remaining vertices, in local indices.
    pub a1: SparseSymmetricMatrix,
}

impl PartialFactorization {
    /// Stored nonzeros of L below the implicit unit diagonal.
    pub fn l_nnz(&self) -> usize {
        self.l_cols.iter().map(|c| c.len()).sum()
    }

    /// Dense reconstruction L·diag(D, A₁)·Lᵀ for audits.
    pub fn reconstruct_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n;
        let mut l = nalgebra::DMatrix::<f64>::identity(n, n);
        for (col, entries) in self.eliminated.iter().zip(&self.l_cols) {
            for &(row, val) in entries {
                l[(row, *col)] = val;
            }
        }
        let mut c = nalgebra::DMatrix::<f64>::zeros(n, n);
        for (idx, &v) in self.eliminated.iter().enumerate() {
            c[(v, v)] = self.d[idx];
        }
        for &(li, lj, val) in self.a1.upper_triplets() {
            let (gi, gj) = (self.remaining[li], self.remaining[lj]);
            c[(gi, gj)] = val;
            if gi != gj {
                c[(gj, gi)] = val;
            }
        }
        &l * c * l.transpose()
    }

    /// ‖L‖₁: maximum column sum of |L| including the unit diagonal.
    pub fn l_norm1(&self) -> f64 {
        let mut worst = 1.0f64;
        for entries in &self.l_cols {
            let s = 1.0 + entries.iter().map(|&(_, v)| v.abs()).sum::<f64>();
            worst = worst.max(s);
        }
        worst
    }

    /// Dense unit-lower L (for condition-number audits).
    pub fn l_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n;
        let mut l = nalgebra::DMatrix::<f64>::identity(n, n);
        for (col, entries) in self.eliminated.iter().zip(&self.l_cols) {
            for &(row, val) in entries {
                l[(row, *col)] = val;
            }
        }
        l
    }
}

/// Eliminate the vertices of `b` in the given trim order.
pub fn partial_ldl(b: &SparseSymmetricMatrix, order: &TrimOrder) -> Result<PartialFactorization> {
    let n = b.dimension();
    let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut diag = vec![0.0f64; n];
    for &(i, j, v) in b.upper_triplets() {
        if i == j {
            diag[i] = v;
        } else {
            adj[i].insert(j, v);
            adj[j].insert(i, v);
        }
    }
    let max_diag = diag.iter().fold(0.0f64, |m, &d| m.max(d.abs())).max(1e-300);
    let pin_tol = 1e-12 * max_diag;

    let mut alive = vec![true; n];
    let mut l_cols = Vec::with_capacity(order.eliminated.len());
    let mut d = Vec::with_capacity(order.eliminated.len());
    let mut d_pinned = Vec::with_capacity(order.eliminated.len());

    for &v in &order.eliminated {
        if !alive[v] {
            return Err(Error::OrderMismatch(format!("vertex {v} eliminated twice")));
        }
        let neighbors: Vec<(usize, f64)> = adj[v].iter().map(|(&u, &w)| (u, w)).collect();
        if neighbors.len() > 2 {
            return Err(Error::OrderMismatch(format!(
                "vertex {v} has degree {} > 2 at its elimination step",
                neighbors.len()
            )));
        }
        let piv = diag[v];
        let pinned = piv.abs() <= pin_tol;
        let mut col = Vec::with_capacity(neighbors.len());
        if !pinned {
            for &(u, w) in &neighbors {
                col.push((u, w / piv));
            }
            // Schur complement among the (at most two) neighbors
            for (ai, &(a, wa)) in neighbors.iter().enumerate() {
                diag[a] -= wa * wa / piv;
                for &(bb, wb) in neighbors.iter().skip(ai + 1) {
                    let upd = wa * wb / piv;
                    *adj[a].entry(bb).or_insert(0.0) -= upd;
                    *adj[bb].entry(a).or_insert(0.0) -= upd;
                }
            }
        } else if !neighbors.is_empty() {
            return Err(Error::OrderMismatch(format!(
                "zero pivot at vertex {v} with nonzero off-diagonals"
            )));
        }
        for &(u, _) in &neighbors {
            adj[u].remove(&v);
        }
        adj[v].clear();
        alive[v] = false;
        l_cols.push(col);
        d.push(if pinned { 0.0 } else { piv });
        d_pinned.push(pinned);
    }

    let remaining: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
    if remaining != order.remaining {
        return Err(Error::OrderMismatch("remaining set disagrees with trim order".into()));
    }
    let local: std::collections::HashMap<usize, usize> =
        remaining.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut triplets = Vec::new();
    for &v in &remaining {
        let lv = local[&v];
        if diag[v] != 0.0 {
            triplets.push((lv, lv, diag[v]));
        }
        for (&u, &w) in &adj[v] {
            if u > v {
                triplets.push((lv, local[&u], w));
            }
        }
    }
    let a1 = SparseSymmetricMatrix::from_upper_triplets(remaining.len(), &triplets)?;
    Ok(PartialFactorization { n, eliminated: order.eliminated.clone(), remaining, l_cols, d, d_pinned, a1 })
}

/// Solve `B y = c` through the partial factorization; the `A₁` block is solved
/// by the supplied backend (dense factorization or a recursive solver).
pub fn solve_via_factorization(
    f: &PartialFactorization,
    a1_solve: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    c: &[f64],
) -> Result<Vec<f64>> {
    if c.len() != f.n {
        return Err(Error::DimensionMismatch { expected: f.n, got: c.len() });
    }
    // forward: y = L^{-1} c (column-oriented over eliminated columns)
    let mut y = c.to_vec();
    for (col_idx, &v) in f.eliminated.iter().enumerate() {
        let yv = y[v];
        if yv != 0.0 {
            for &(row, val) in &f.l_cols[col_idx] {
                y[row] -= val * yv;
            }
        }
    }
    // block solve: D on the eliminated part, A1 on the remaining part
    let mut z = y.clone();
    for (col_idx, &v) in f.eliminated.iter().enumerate() {
        z[v] = if f.d_pinned[col_idx] { 0.0 } else { y[v] / f.d[col_idx] };
    }
    if !f.remaining.is_empty() {
        let rhs: Vec<f64> = f.remaining.iter().map(|&v| y[v]).collect();
        let sol = a1_solve(&rhs)?;
        if sol.len() != f.remaining.len() {
            return Err(Error::DimensionMismatch { expected: f.remaining.len(), got: sol.len() });
        }
        for (&v, &s) in f.remaining.iter().zip(&sol) {
            z[v] = s;
        }
    }
    // backward: solve L^T x = z in place
    for (col_idx, &v) in f.eliminated.iter().enumerate().rev() {
        let mut s = z[v];
        for &(row, val) in &f.l_cols[col_idx] {
            s -= val * z[row];
        }
        z[v] = s;
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::vec;

    fn laplacian(n: usize, edges: &[(usize, usize, f64)]) -> SparseSymmetricMatrix {
        WeightedGraph::new(n, edges).unwrap().laplacian()
    }

    #[test]
    fn trim_star_eliminates_everything() {
        let r = [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)];
        let order = trim(4, &r, &[], None).unwrap();
        assert_eq!(order.remaining, Vec::<usize>::new());
        assert_eq!(order.eliminated.len(), 4);
        assert_eq!(order.reduced_graph.n_edges(), 0);
    }

    #[test]
    fn trim_degree2_series_weight() {
        // path a-b-c with w = (1,1), nothing protected: after eliminating b
        // (degree 2) the (a,c) edge has weight 1/(1/1 + 1/1) = 1/2
        let r = [(0, 1, 1.0), (1, 2, 1.0)];
        let s = [(0, 2, 0.0); 0];
        // protect endpoints 0 and 2 via a synthetic protected edge to observe the fill
        let s2 = [(0, 2, 0.25)];
        let order = trim(3, &r, &s2, None).unwrap();
        assert_eq!(order.eliminated, vec![1]);
        assert_eq!(order.remaining, vec![0, 2]);
        // fill 1/2 merged with the protected edge 0.25
        let e = order.reduced_graph.edges();
        assert_eq!(e.len(), 1);
        assert!((e[0].w - 0.75).abs() < 1e-15);
        let _ = s;
    }

    #[test]
    fn trim_respects_protection_and_bounds() {
        // random tree + 2 protected edges: remaining <= 8 vertices, <= 10 edges
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..30 {
            let n = rng.gen_range(5..80);
            let mut r = Vec::new();
            for v in 1..n {
                r.push((rng.gen_range(0..v), v, 10f64.powf(rng.gen_range(-2.0..0.0))));
            }
            let mut s = Vec::new();
            for _ in 0..2 {
                let u = rng.gen_range(0..n);
                let v = rng.gen_range(0..n);
                if u != v {
                    s.push((u, v, 1.0));
                }
            }
            let order = trim(n, &r, &s, None).unwrap();
            assert!(order.remaining.len() <= 4 * s.len(), "{} > 4|S|", order.remaining.len());
            assert!(order.reduced_graph.n_edges() <= 5 * s.len());
            // no unprotected remaining vertex of degree <= 2
            let mut protected = vec![false; n];
            for &(u, v, _) in &s {
                protected[u] = true;
                protected[v] = true;
            }
            let mut deg = vec![0usize; n];
            for e in order.reduced_graph.edges() {
                deg[e.u] += 1;
                deg[e.v] += 1;
            }
            for &v in &order.remaining {
                assert!(protected[v] || deg[v] > 2, "vertex {v} degree {} unprotected", deg[v]);
            }
        }
    }

    #[test]
    fn partial_ldl_empty_order_is_identity() {
        let b = laplacian(3, &[(0, 1, 1.0), (1, 2, 2.0)]);
        let order = TrimOrder {
            eliminated: vec![],
            remaining: vec![0, 1, 2],
            reduced_graph: WeightedGraph::new(3, &[]).unwrap(),
        };
        let f = partial_ldl(&b, &order).unwrap();
        assert_eq!(f.l_nnz(), 0);
        assert_eq!(f.a1.upper_triplets(), b.upper_triplets());
    }

    #[test]
    fn partial_ldl_reconstructs() {
        let edges = [(0, 1, 1.0), (1, 2, 3.0), (2, 3, 0.5), (1, 3, 2.0)];
        let b = laplacian(4, &edges);
        let r: Vec<_> = edges[..3].to_vec();
        let s = [edges[3]];
        let order = trim(4, &r, &s, None).unwrap();
        let f = partial_ldl(&b, &order).unwrap();
        let rec = f.reconstruct_dense();
        let bd = b.to_dense();
        let err = (&rec - &bd).norm() / bd.norm();
        assert!(err < 1e-12, "reconstruction error {err}");
        assert!(f.l_nnz() + f.n <= 2 * f.n - 1 || f.l_nnz() == 0);
        assert!(f.l_norm1() <= 2.0 + 1e-12);
    }

    #[test]
    fn solve_via_factorization_single_edge() {
        let b = laplacian(2, &[(0, 1, 1.0)]);
        let order = trim(2, &[(0, 1, 1.0)], &[], None).unwrap();
        let f = partial_ldl(&b, &order).unwrap();
        let c = vec![1.0, -1.0];
        let dense = |rhs: &[f64]| crate::dense::solve_psd_dense(&f.a1, rhs);
        let mut y = solve_via_factorization(&f, &dense, &c).unwrap();
        // ground to mean zero and check residual
        let mean: f64 = y.iter().sum::<f64>() / y.len() as f64;
        for yi in y.iter_mut() {
            *yi -= mean;
        }
        let r = vec::sub(&b.apply(&y).unwrap(), &c);
        assert!(vec::norm(&r) < 1e-12);
        assert!(y.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn solve_zero_rhs_gives_zero() {
        let b = laplacian(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let order = trim(3, &[(0, 1, 1.0), (1, 2, 1.0)], &[], None).unwrap();
        let f = partial_ldl(&b, &order).unwrap();
        let dense = |rhs: &[f64]| crate::dense::solve_psd_dense(&f.a1, rhs);
        let y = solve_via_factorization(&f, &dense, &[0.0, 0.0, 0.0]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_preconditioner_solve_matches_dense() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
        for trial in 0..20 {
            let n = rng.gen_range(10..120);
            let g = crate::generate::tree_plus(n, 3, &mut rng, 2.0);
            let (tree_ids, _) = crate::generate::any_spanning_tree(&g);
            let tset: std::collections::BTreeSet<_> = tree_ids.iter().copied().collect();
            let r: Vec<_> = g.edges().iter().filter(|e| tset.contains(&e.id)).map(|e| (e.u, e.v, e.w)).collect();
            let s: Vec<_> = g.edges().iter().filter(|e| !tset.contains(&e.id)).map(|e| (e.u, e.v, e.w)).collect();
            let b = g.laplacian();
            let order = trim(n, &r, &s, None).unwrap();
            let f = partial_ldl(&b, &order).unwrap();
            // nnz budget
            assert!(f.l_nnz() <= 2 * n - 1, "trial {trial}: nnz {} > 2n-1", f.l_nnz());
            // compatible rhs
            let mut c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean: f64 = c.iter().sum::<f64>() / n as f64;
            c.iter_mut().for_each(|x| *x -= mean);
            let a1 = f.a1.clone();
            let ldl = crate::dense::DenseLdl::from_sparse(&a1).unwrap();
            let backend = move |rhs: &[f64]| ldl.solve(rhs);
            let y = solve_via_factorization(&f, &backend, &c).unwrap();
            let resid = vec::sub(&b.apply(&y).unwrap(), &c);
            let rel = vec::norm(&resid) / vec::norm(&c);
            assert!(rel < 1e-10, "trial {trial}: residual {rel}");
        }
    }

    #[test]
    fn a1_equals_induced_plus_series_resistance() {
        // the reduced matrix from numeric elimination must match the graph
        // arithmetic route: induced subgraph on W plus one series edge of
        // weight 1/(sum 1/w_i) per eliminated path (as built by trim)
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2121);
        for trial in 0..25 {
            let n = rng.gen_range(5..50);
            let g = crate::generate::tree_plus(n, rng.gen_range(0..4), &mut rng, 2.0);
            let (tree_ids, _) = crate::generate::any_spanning_tree(&g);
            let tset: std::collections::BTreeSet<_> = tree_ids.iter().copied().collect();
            let r: Vec<_> = g.edges().iter().filter(|e| tset.contains(&e.id)).map(|e| (e.u, e.v, e.w)).collect();
            let s: Vec<_> = g.edges().iter().filter(|e| !tset.contains(&e.id)).map(|e| (e.u, e.v, e.w)).collect();
            let order = trim(n, &r, &s, None).unwrap();
            let f = partial_ldl(&g.laplacian(), &order).unwrap();

            let expected_full = order.reduced_graph.laplacian();
            for (li, &gi) in f.remaining.iter().enumerate() {
                for (lj, &gj) in f.remaining.iter().enumerate().skip(li) {
                    let got = f.a1.get(li, lj);
                    let want = expected_full.get(gi, gj);
                    let scale = got.abs().max(want.abs()).max(1e-30);
                    assert!(
                        (got - want).abs() <= 1e-9 * scale,
                        "trial {trial}: A1[{li},{lj}] = {got} vs series construction {want}"
                    );
                }
            }
            // A1 stays a Laplacian
            if !f.remaining.is_empty() && f.a1.nnz_upper() > 0 {
                assert_eq!(
                    f.a1.classification(),
                    crate::matrix::Classification::Laplacian
                );
            }
        }
    }

    #[test]
    fn gremban_trim_pairs_consecutively() {
        // cover of a path with a positive edge: base 0-1 (neg), 1-2 (pos)
        let a = SparseSymmetricMatrix::from_triplets(
            3,
            &[(0, 0, 1.0), (1, 1, 2.0), (2, 2, 1.0), (0, 1, -1.0), (1, 2, 1.0)],
        )
        .unwrap();
        let (cover, _) = crate::reductions::gremban_cover(&a).unwrap();
        let g = crate::graph::graph_of(&cover).unwrap();
        let r: Vec<_> = g.edges().iter().map(|e| (e.u, e.v, e.w)).collect();
        let order = trim(6, &r, &[], Some(3)).unwrap();
        // all eliminated; pairs appear consecutively
        assert_eq!(order.eliminated.len(), 6);
        for chunk in order.eliminated.chunks(2) {
            if chunk.len() == 2 {
                assert_eq!(chunk[0] + 3, chunk[1], "pair broken: {:?}", chunk);
            }
        }
    }
}
