//! Support theory: weighted embeddings of one graph into another, the
//! dilation/congestion certificate bounding the relative condition number
//! κ_f(A,B), and a dense generalized-eigenvalue oracle for the true value.

use crate::error::{Error, Result};
use crate::graph::{EdgeId, WeightedGraph};
use crate::matrix::{vec, SparseSymmetricMatrix};
use nalgebra::DMatrix;
use std::collections::BTreeMap;

/// A weighted embedding π: each edge `e` of A maps to a simple path in B
/// (edge ids of B) with positive weights π(e, f) for each f on the path.
#[derive(Debug, Clone)]
pub struct WeightedEmbedding {
    /// Indexed by A-edge id: path edge ids in B plus aligned π weights.
    pub paths: Vec<EmbeddedPath>,
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddedPath {
    pub edges: Vec<EdgeId>,
    pub pi: Vec<f64>,
}

/// Per-edge dilations, per-preconditioner-edge congestions, and the resulting
/// κ_f upper bound.
#[derive(Debug, Clone)]
pub struct CongestionReport {
    /// wdilation(π, e) per A-edge id.
    pub dilations: Vec<f64>,
    /// wcong(π, f) per B-edge id.
    pub congestions: BTreeMap<EdgeId, f64>,
    /// max_f wcong(π, f): an upper bound on κ_f(A, B).
    pub bound: f64,
}

fn b_edge_index(b: &WeightedGraph) -> BTreeMap<EdgeId, (usize, usize, f64)> {
    b.edges().iter().map(|e| (e.id, (e.u, e.v, e.w))).collect()
}

/// Validate that `emb` embeds every edge of `a` as a simple path in `b`.
pub fn validate_embedding(
    a: &WeightedGraph,
    b: &WeightedGraph,
    emb: &WeightedEmbedding,
) -> Result<()> {
    if emb.paths.len() != a.n_edges() {
        return Err(Error::InvalidEmbedding(format!(
            "{} paths for {} edges",
            emb.paths.len(),
            a.n_edges()
        )));
    }
    let bidx = b_edge_index(b);
    for e in a.edges() {
        let path = &emb.paths[e.id];
        if path.edges.is_empty() {
            return Err(Error::InvalidEmbedding(format!("edge {} unembedded", e.id)));
        }
        if path.edges.len() != path.pi.len() {
            return Err(Error::InvalidEmbedding(format!("edge {}: pi misaligned", e.id)));
        }
        if path.pi.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidEmbedding(format!("edge {}: non-positive pi", e.id)));
        }
        // walk the path from e.u, checking simplicity and the endpoint
        let mut at = e.u;
        let mut visited = std::collections::HashSet::new();
        visited.insert(at);
        for &fid in &path.edges {
            let &(fu, fv, _) = bidx
                .get(&fid)
                .ok_or_else(|| Error::InvalidEmbedding(format!("edge {fid} not in B")))?;
            let next = if at == fu {
                fv
            } else if at == fv {
                fu
            } else {
                return Err(Error::InvalidEmbedding(format!(
                    "edge {}: path breaks at vertex {at}",
                    e.id
                )));
            };
            if !visited.insert(next) {
                return Err(Error::InvalidEmbedding(format!(
                    "edge {}: path revisits vertex {next}",
                    e.id
                )));
            }
            at = next;
        }
        if at != e.v {
            return Err(Error::InvalidEmbedding(format!(
                "edge {}: path ends at {at}, want {}",
                e.id, e.v
            )));
        }
    }
    Ok(())
}

/// wdilation(π, e) = Σ_{f ∈ path(π,e)} a_e / (b_f · π(e,f)).
pub fn weighted_dilation(
    a: &WeightedGraph,
    b: &WeightedGraph,
    emb: &WeightedEmbedding,
    edge: EdgeId,
) -> Result<f64> {
    let e = a
        .edges()
        .iter()
        .find(|e| e.id == edge)
        .ok_or(Error::VertexOutOfRange { id: edge, n: a.n_edges() })?;
    let path = emb
        .paths
        .get(edge)
        .filter(|p| !p.edges.is_empty())
        .ok_or_else(|| Error::InvalidEmbedding(format!("edge {edge} unembedded")))?;
    let bidx = b_edge_index(b);
    let mut terms = Vec::with_capacity(path.edges.len());
    for (&fid, &pi) in path.edges.iter().zip(&path.pi) {
        let &(_, _, bw) = bidx
            .get(&fid)
            .ok_or_else(|| Error::InvalidEmbedding(format!("edge {fid} not in B")))?;
        terms.push(e.w / (bw * pi));
    }
    Ok(vec::pairwise_sum(&terms))
}

/// Is every edge of `b` an edge of `a` with identical id and weight?
pub fn is_subgraph(a: &WeightedGraph, b: &WeightedGraph) -> bool {
    let aidx: BTreeMap<EdgeId, f64> = a.edges().iter().map(|e| (e.id, e.w)).collect();
    b.edges().iter().all(|e| aidx.get(&e.id) == Some(&e.w))
}

/// Compute the congestion certificate: wcong(π,f) = Σ_{e: f∈path(e)}
/// wdilation(π,e)·π(e,f), and bound = max_f wcong(π,f). By the Support
/// Theorem the bound dominates κ_f(A,B) whenever B is a subgraph of A (checked).
pub fn congestion_certificate(
    a: &WeightedGraph,
    b: &WeightedGraph,
    emb: &WeightedEmbedding,
) -> Result<CongestionReport> {
    if !is_subgraph(a, b) {
        return Err(Error::InvalidEmbedding(
            "B is not a subgraph of A; certificate would be unsound".into(),
        ));
    }
    validate_embedding(a, b, emb)?;
    let bidx = b_edge_index(b);

    let mut dilations = vec![0.0; a.n_edges()];
    for e in a.edges() {
        dilations[e.id] = weighted_dilation(a, b, emb, e.id)?;
    }
    // gather per-B-edge contributions, then pairwise-sum in deterministic order
    let mut contrib: BTreeMap<EdgeId, Vec<f64>> = bidx.keys().map(|&f| (f, Vec::new())).collect();
    for e in a.edges() {
        let path = &emb.paths[e.id];
        for (&fid, &pi) in path.edges.iter().zip(&path.pi) {
            contrib
                .get_mut(&fid)
                .expect("validated path edge")
                .push(dilations[e.id] * pi);
        }
    }
    let congestions: BTreeMap<EdgeId, f64> = contrib
        .into_iter()
        .map(|(f, terms)| (f, vec::pairwise_sum(&terms)))
        .collect();
    let bound = congestions.values().fold(0.0f64, |m, &c| m.max(c));
    Ok(CongestionReport { dilations, congestions, bound })
}

/// The identity embedding of a graph into itself (path(e) = e, π = 1).
pub fn identity_embedding(a: &WeightedGraph) -> WeightedEmbedding {
    WeightedEmbedding {
        paths: a
            .edges()
            .iter()
            .map(|e| EmbeddedPath { edges: vec![e.id], pi: vec![1.0] })
            .collect(),
    }
}

/// Extreme generalized eigenvalues of the pencil `A x = λ B x` restricted to
/// the common range.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PencilSpectrum {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl PencilSpectrum {
    /// σ(A, B): the least τ with τB ⪰ A.
    pub fn sigma_ab(&self) -> f64 {
        self.lambda_max
    }
    /// σ(B, A).
    pub fn sigma_ba(&self) -> f64 {
        1.0 / self.lambda_min
    }
    /// κ_f(A, B) = σ(A,B)·σ(B,A).
    pub fn kappa(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

/// Null-space structure of a Laplacian-plus-excess matrix: connected
/// components of the off-diagonal graph, and whether each is singular
/// (no diagonal excess anywhere in the component).
fn null_structure(a: &SparseSymmetricMatrix) -> Result<(Vec<Vec<usize>>, Vec<bool>)> {
    let n = a.dimension();
    // component split on off-diagonal support
    let mut adj = vec![Vec::new(); n];
    for &(i, j, _) in a.upper_triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let c = comps.len();
        let mut verts = vec![s];
        comp[s] = c;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = c;
                    verts.push(v);
                    stack.push(v);
                }
            }
        }
        verts.sort_unstable();
        comps.push(verts);
    }
    // excess per row = diag - sum |off|
    let diag = a.diagonal();
    let off = a.offdiag_abs_row_sums();
    let scale = diag.iter().fold(0.0f64, |m, &d| m.max(d.abs())).max(1e-300);
    let mut singular = Vec::with_capacity(comps.len());
    for verts in &comps {
        let excess: f64 = verts.iter().map(|&i| (diag[i] - off[i]).max(0.0)).sum();
        singular.push(excess <= 1e-9 * scale);
    }
    Ok((comps, singular))
}

/// Orthonormal basis of the orthogonal complement of the span of per-component
/// constant vectors (for singular components). Helmert vectors per component.
fn range_basis(n: usize, comps: &[Vec<usize>], singular: &[bool]) -> DMatrix<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (verts, &sing) in comps.iter().zip(singular) {
        if !sing {
            for &v in verts {
                let mut col = vec![0.0; n];
                col[v] = 1.0;
                cols.push(col);
            }
        } else {
            let s = verts.len();
            for k in 1..s {
                // (1,...,1,-k,0,...)/sqrt(k(k+1)) over the component's vertices
                let norm = (k as f64 * (k as f64 + 1.0)).sqrt();
                let mut col = vec![0.0; n];
                for &v in &verts[..k] {
                    col[v] = 1.0 / norm;
                }
                col[verts[k]] = -(k as f64) / norm;
                cols.push(col);
            }
        }
    }
    let r = cols.len();
    let mut q = DMatrix::zeros(n, r);
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            q[(i, j)] = v;
        }
    }
    q
}

pub const DEFAULT_ORACLE_CAP: usize = 500;

/// Dense oracle for the extreme generalized eigenvalues of `(a, b)` on their
/// common range. Errors when the spans differ structurally or `n` exceeds `cap`.
pub fn pencil_spectrum_oracle(
    a: &SparseSymmetricMatrix,
    b: &SparseSymmetricMatrix,
    cap: usize,
) -> Result<PencilSpectrum> {
    let n = a.dimension();
    if b.dimension() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.dimension() });
    }
    if n > cap {
        return Err(Error::OracleCap { n, cap });
    }
    let (ca, sa) = null_structure(a)?;
    let (cb, sb) = null_structure(b)?;
    if ca != cb || sa != sb {
        return Err(Error::SpanMismatch(
            "component structure or singularity pattern differs".into(),
        ));
    }
    let q = range_basis(n, &ca, &sa);
    let r = q.ncols();
    if r == 0 {
        return Err(Error::SpanMismatch("both matrices are zero on their range".into()));
    }
    let ad = a.to_dense();
    let bd = b.to_dense();
    let ar = q.transpose() * &ad * &q;
    let br = q.transpose() * &bd * &q;
    // W = L^{-1} Ar L^{-T} with Br = L L^T
    let chol = br
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SpanMismatch("B is not positive definite on the range".into()))?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&ar)
        .ok_or_else(|| Error::SpanMismatch("triangular solve failed".into()))?;
    let z = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::SpanMismatch("triangular solve failed".into()))?;
    let mut w = z.transpose();
    // symmetrize against roundoff
    let wt = w.transpose();
    w = (w + wt) * 0.5;
    let eig = w.symmetric_eigenvalues();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo > 0.0) {
        return Err(Error::SpanMismatch(format!(
            "pencil has non-positive eigenvalue {lo}; spans likely differ"
        )));
    }
    Ok(PencilSpectrum { lambda_min: lo, lambda_max: hi })
}

/// κ_f(A, B) via the dense oracle.
pub fn kappa_f_oracle(
    a: &SparseSymmetricMatrix,
    b: &SparseSymmetricMatrix,
    cap: usize,
) -> Result<f64> {
    Ok(pencil_spectrum_oracle(a, b, cap)?.kappa())
}

/// κ_f(A): ratio of the largest to smallest nonzero eigenvalue, densely.
pub fn kappa_f_single(a: &SparseSymmetricMatrix, cap: usize) -> Result<f64> {
    let n = a.dimension();
    if n > cap {
        return Err(Error::OracleCap { n, cap });
    }
    crate::dense::kappa_f_dense(&a.to_dense())
        .ok_or_else(|| Error::SpanMismatch("matrix is zero".into()))
}

/// Conservative a-priori upper bound on κ_f for a Laplacian-plus-excess
/// matrix, from entries only: λ_max ≤ 2·max diag and
/// λ_min ≥ min(w)·2(1−cos(π/n)) (Fiedler-type bound via edge connectivity).
pub fn kappa_f_upper_bound(a: &SparseSymmetricMatrix) -> f64 {
    let n = a.dimension().max(2);
    let diag = a.diagonal();
    let max_diag = diag.iter().fold(0.0f64, |m, &d| m.max(d));
    let mut min_w = f64::INFINITY;
    for &(i, j, v) in a.upper_triplets() {
        if i != j && v != 0.0 {
            min_w = min_w.min(v.abs());
        }
    }
    let off = a.offdiag_abs_row_sums();
    for i in 0..a.dimension() {
        let exc = diag[i] - off[i];
        if exc > 1e-12 * max_diag.max(1e-300) {
            min_w = min_w.min(exc);
        }
    }
    if !min_w.is_finite() || max_diag == 0.0 {
        return 1.0;
    }
    let lam_min = min_w * 2.0 * (1.0 - (std::f64::consts::PI / n as f64).cos());
    (2.0 * max_diag / lam_min).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;

    fn unit_triangle() -> WeightedGraph {
        WeightedGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    /// The triangle's spanning path 0-1-2 keeping original edge ids.
    fn triangle_path(tri: &WeightedGraph) -> WeightedGraph {
        let edges: Vec<_> = tri.edges().iter().filter(|e| e.id != 2).copied().collect();
        WeightedGraph::from_edges(3, edges).unwrap()
    }

    fn triangle_embedding() -> WeightedEmbedding {
        // edges 0:(0,1), 1:(1,2) route over themselves; edge 2:(0,2) over both
        WeightedEmbedding {
            paths: vec![
                EmbeddedPath { edges: vec![0], pi: vec![1.0] },
                EmbeddedPath { edges: vec![1], pi: vec![1.0] },
                EmbeddedPath { edges: vec![0, 1], pi: vec![1.0, 1.0] },
            ],
        }
    }

    #[test]
    fn self_embedding_dilation_is_one() {
        let tri = unit_triangle();
        let emb = identity_embedding(&tri);
        for e in tri.edges() {
            assert_eq!(weighted_dilation(&tri, &tri, &emb, e.id).unwrap(), 1.0);
        }
    }

    #[test]
    fn triangle_into_path_dilation() {
        let tri = unit_triangle();
        let path = triangle_path(&tri);
        let emb = triangle_embedding();
        // edge (0,2) over two unit edges with pi = 1: dilation = 1/1 + 1/1 = 2
        assert_eq!(weighted_dilation(&tri, &path, &emb, 2).unwrap(), 2.0);
        // with pi = 2 on both: dilation = 1/2 + 1/2 = 1
        let mut emb2 = emb.clone();
        emb2.paths[2].pi = vec![2.0, 2.0];
        assert_eq!(weighted_dilation(&tri, &path, &emb2, 2).unwrap(), 1.0);
    }

    #[test]
    fn identity_certificate_bound_is_one() {
        let tri = unit_triangle();
        let emb = identity_embedding(&tri);
        let report = congestion_certificate(&tri, &tri, &emb).unwrap();
        assert!((report.bound - 1.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_into_path_congestion_bound_three() {
        // wcong(each path edge) = wdil(self)·1 + wdil(chord)·1 = 1 + 2 = 3
        let tri = unit_triangle();
        let path = triangle_path(&tri);
        let emb = triangle_embedding();
        let report = congestion_certificate(&tri, &path, &emb).unwrap();
        assert_eq!(report.bound, 3.0);
        assert_eq!(report.congestions[&0], 3.0);
        assert_eq!(report.congestions[&1], 3.0);
        // oracle value lies in (1, 3]
        let k = kappa_f_oracle(&tri.laplacian(), &path.laplacian(), 100).unwrap();
        assert!(k > 1.0 && k <= 3.0 + 1e-9, "kappa = {k}");
    }

    #[test]
    fn oracle_identity_and_scale_invariance() {
        let g = crate::generate::grid(4, 4, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1), 1.0);
        use rand::SeedableRng;
        let a = g.laplacian();
        assert!((kappa_f_oracle(&a, &a, 100).unwrap() - 1.0).abs() < 1e-9);
        // b = 2a: kappa still 1 (product of inversely scaling factors)
        let two_a = SparseSymmetricMatrix::from_upper_triplets(
            a.dimension(),
            &a.upper_triplets().iter().map(|&(i, j, v)| (i, j, 2.0 * v)).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!((kappa_f_oracle(&a, &two_a, 100).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn subgraph_support_at_most_one() {
        // for B a subgraph of A, the max eigenvalue of the (B, A) pencil is <= 1
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let n = 20;
            let g = crate::generate::connected_graph(n, 40, &mut rng, 3.0);
            let (tree_ids, _) = crate::generate::any_spanning_tree(&g);
            // subgraph: tree plus a few extra edges
            let mut keep: std::collections::BTreeSet<usize> = tree_ids.into_iter().collect();
            for e in g.edges() {
                if rng.gen::<f64>() < 0.2 {
                    keep.insert(e.id);
                }
            }
            let edges: Vec<_> = g.edges().iter().filter(|e| keep.contains(&e.id)).copied().collect();
            let b = WeightedGraph::from_edges(n, edges).unwrap();
            let spec = pencil_spectrum_oracle(&b.laplacian(), &g.laplacian(), 100).unwrap();
            assert!(spec.lambda_max <= 1.0 + 1e-9, "sigma(B,A) = {}", spec.lambda_max);
        }
    }

    #[test]
    fn certificate_is_sound_on_random_subgraphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5150);
        for trial in 0..15 {
            let n = 14;
            let g = crate::generate::connected_graph(n, 30, &mut rng, 2.0);
            let (tree_ids, lca) = crate::generate::any_spanning_tree(&g);
            let keep: std::collections::BTreeSet<usize> = tree_ids.iter().copied().collect();
            let edges: Vec<_> = g.edges().iter().filter(|e| keep.contains(&e.id)).copied().collect();
            let b = WeightedGraph::from_edges(n, edges).unwrap();
            // embed every edge over the tree path, pi drawn positive at random
            let tree_pos: std::collections::HashMap<usize, usize> =
                b.edges().iter().enumerate().map(|(idx, e)| (idx, e.id)).map(|(idx, id)| (id, idx)).collect();
            let _ = tree_pos;
            let mut paths = Vec::new();
            for e in g.edges() {
                if keep.contains(&e.id) {
                    paths.push(EmbeddedPath { edges: vec![e.id], pi: vec![1.0] });
                } else {
                    let ids = lca.path_edges(e.u, e.v).unwrap();
                    let pi = ids.iter().map(|_| 10f64.powf(rng.gen_range(-1.0..1.0))).collect();
                    paths.push(EmbeddedPath { edges: ids, pi });
                }
            }
            let emb = WeightedEmbedding { paths };
            let report = congestion_certificate(&g, &b, &emb).unwrap();
            let kappa = kappa_f_oracle(&g.laplacian(), &b.laplacian(), 100).unwrap();
            assert!(
                kappa <= report.bound * (1.0 + 1e-6),
                "trial {trial}: kappa {kappa} > bound {}",
                report.bound
            );
        }
    }

    #[test]
    fn pi_scaling_keeps_certificate_sound() {
        // scaling all pi(e,·) for one e by c > 1 divides its dilation by c
        let tri = unit_triangle();
        let path = triangle_path(&tri);
        let mut emb = triangle_embedding();
        let d_before = weighted_dilation(&tri, &path, &emb, 2).unwrap();
        let c = 3.0;
        for p in emb.paths[2].pi.iter_mut() {
            *p *= c;
        }
        let d_after = weighted_dilation(&tri, &path, &emb, 2).unwrap();
        assert!((d_after - d_before / c).abs() < 1e-15);
        let report = congestion_certificate(&tri, &path, &emb).unwrap();
        let kappa = kappa_f_oracle(&tri.laplacian(), &path.laplacian(), 100).unwrap();
        assert!(kappa <= report.bound * (1.0 + 1e-6));
    }

    #[test]
    fn oracle_rejects_span_mismatch() {
        let g1 = WeightedGraph::new(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        let g2 = WeightedGraph::new(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(matches!(
            kappa_f_oracle(&g1.laplacian(), &g2.laplacian(), 100),
            Err(Error::SpanMismatch(_))
        ));
    }

    #[test]
    fn oracle_cap_enforced() {
        let g = WeightedGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let a = g.laplacian();
        assert!(matches!(kappa_f_oracle(&a, &a, 2), Err(Error::OracleCap { .. })));
    }
}
