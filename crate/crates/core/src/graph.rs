//! Weighted multigraphs with stable edge identities, and the graph ↔ Laplacian
//! isomorphism.
//!
//! Vertex ids are dense `0..n`. Edge ids are stable: contraction and subgraph
//! extraction keep each edge's original id, so an edge can always be traced
//! back to the input graph.

use crate::error::{Error, Result};
use crate::matrix::SparseSymmetricMatrix;

/// Stable identifier of an edge; survives contraction.
pub type EdgeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
    pub id: EdgeId,
}

impl Edge {
    /// The endpoint that is not `x`.
    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// Undirected weighted multigraph. All weights strictly positive, no self-loops.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
}

impl WeightedGraph {
    /// Build a graph from `(u, v, w)` triples; edge ids are assigned by position.
    pub fn new(n: usize, weighted_edges: &[(usize, usize, f64)]) -> Result<Self> {
        let edges = weighted_edges
            .iter()
            .enumerate()
            .map(|(id, &(u, v, w))| Edge { u, v, w, id })
            .collect();
        Self::from_edges(n, edges)
    }

    /// Build a graph from fully-specified edges (used by contraction to keep ids).
    pub fn from_edges(n: usize, edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.u >= n {
                return Err(Error::VertexOutOfRange { id: e.u, n });
            }
            if e.v >= n {
                return Err(Error::VertexOutOfRange { id: e.v, n });
            }
            if e.u == e.v {
                return Err(Error::SelfLoop(e.u));
            }
            if !(e.w > 0.0) || !e.w.is_finite() {
                return Err(Error::NonPositiveWeight { u: e.u, v: e.v, w: e.w });
            }
        }
        Ok(WeightedGraph { n, edges })
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Adjacency lists as (neighbor, edge index into `edges()`), sorted for
    /// deterministic traversal.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (idx, e) in self.edges.iter().enumerate() {
            adj[e.u].push((e.v, idx));
            adj[e.v].push((e.u, idx));
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// Connected components; returns (component index per vertex, component count).
    pub fn components(&self) -> (Vec<usize>, usize) {
        let adj = self.adjacency();
        let mut comp = vec![usize::MAX; self.n];
        let mut count = 0;
        let mut queue = std::collections::VecDeque::new();
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.components().1 == 1
    }

    /// The Laplacian of this graph: off-diagonal `A[u,v] = -w(u,v)` (parallel
    /// edges summed), diagonal fixed by `A·1 = 0`.
    pub fn laplacian(&self) -> SparseSymmetricMatrix {
        let mut merged: std::collections::BTreeMap<(usize, usize), f64> = std::collections::BTreeMap::new();
        for e in &self.edges {
            let key = (e.u.min(e.v), e.u.max(e.v));
            *merged.entry(key).or_insert(0.0) += e.w;
        }
        let mut diag = vec![0.0; self.n];
        let mut entries = Vec::with_capacity(merged.len() + self.n);
        for (&(u, v), &w) in &merged {
            entries.push((u, v, -w));
            diag[u] += w;
            diag[v] += w;
        }
        for (i, &d) in diag.iter().enumerate() {
            if d != 0.0 {
                entries.push((i, i, d));
            }
        }
        SparseSymmetricMatrix::from_upper_triplets(self.n, &entries)
            .expect("valid graph yields a valid Laplacian")
    }
}

/// Convert a Laplacian back to a weighted graph (inverse of [`WeightedGraph::laplacian`]
/// after parallel-edge merge). Off-diagonal entries must be non-positive.
pub fn graph_of(a: &SparseSymmetricMatrix) -> Result<WeightedGraph> {
    let mut triples = Vec::new();
    for &(i, j, v) in a.upper_triplets() {
        if i == j {
            continue;
        }
        if v > 0.0 {
            return Err(Error::NotPsddd(format!(
                "positive off-diagonal at ({i},{j}); not a Laplacian"
            )));
        }
        if v < 0.0 {
            triples.push((i, j, -v));
        }
    }
    WeightedGraph::new(a.dimension(), &triples)
}

/// laplacian_of as a free function, mirroring the graph method.
pub fn laplacian_of(g: &WeightedGraph) -> SparseSymmetricMatrix {
    g.laplacian()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_laplacian() {
        let g = WeightedGraph::new(2, &[(0, 1, 1.0)]).unwrap();
        let a = g.laplacian();
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(1, 1), 1.0);
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(1, 0), -1.0);
    }

    #[test]
    fn triangle_unit_weights() {
        let g = WeightedGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let a = g.laplacian();
        for i in 0..3 {
            assert_eq!(a.get(i, i), 2.0);
            for j in 0..3 {
                if i != j {
                    assert_eq!(a.get(i, j), -1.0);
                }
            }
        }
    }

    #[test]
    fn weighted_path_row_sums() {
        // path 0-1-2 with w = (1, 2): diag (1, 3, 2)
        let g = WeightedGraph::new(3, &[(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        let a = g.laplacian();
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(1, 1), 3.0);
        assert_eq!(a.get(2, 2), 2.0);
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(1, 2), -2.0);
        // dense row-sum oracle
        for i in 0..3 {
            let row_sum: f64 = (0..3).map(|j| a.get(i, j)).sum();
            assert!(row_sum.abs() < 1e-15, "row {i} sums to {row_sum}");
        }
    }

    #[test]
    fn parallel_edges_merge_in_laplacian() {
        let g = WeightedGraph::new(2, &[(0, 1, 1.0), (0, 1, 2.5)]).unwrap();
        let a = g.laplacian();
        assert_eq!(a.get(0, 1), -3.5);
        assert_eq!(a.get(0, 0), 3.5);
    }

    #[test]
    fn graph_of_round_trip() {
        let g = WeightedGraph::new(4, &[(0, 1, 1.5), (1, 2, 0.25), (2, 3, 4.0), (0, 3, 2.0)]).unwrap();
        let g2 = graph_of(&g.laplacian()).unwrap();
        assert_eq!(g2.n_vertices(), 4);
        let mut w1: Vec<_> = g.edges().iter().map(|e| (e.u.min(e.v), e.u.max(e.v), e.w)).collect();
        let mut w2: Vec<_> = g2.edges().iter().map(|e| (e.u.min(e.v), e.u.max(e.v), e.w)).collect();
        w1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        w2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(w1, w2);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(WeightedGraph::new(2, &[(0, 0, 1.0)]).is_err());
        assert!(WeightedGraph::new(2, &[(0, 1, 0.0)]).is_err());
        assert!(WeightedGraph::new(2, &[(0, 1, -1.0)]).is_err());
        assert!(WeightedGraph::new(2, &[(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn components_two_disjoint_edges() {
        let g = WeightedGraph::new(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let (comp, count) = g.components();
        assert_eq!(count, 2);
        assert_eq!(comp[0], comp[1]);
        assert_eq!(comp[2], comp[3]);
        assert_ne!(comp[0], comp[2]);
    }

    #[test]
    fn components_match_bfs_oracle() {
        // 50-vertex random-ish graph vs an independent BFS over an edge list.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let mut edges = Vec::new();
        for _ in 0..60 {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u != v {
                edges.push((u, v, 1.0 + rng.gen::<f64>()));
            }
        }
        let g = WeightedGraph::new(n, &edges).unwrap();
        let (comp, _) = g.components();

        // independent BFS oracle on raw edge list
        let mut adj = vec![Vec::new(); n];
        for &(u, v, _) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut oracle = vec![usize::MAX; n];
        let mut c = 0;
        for s in 0..n {
            if oracle[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            oracle[s] = c;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if oracle[v] == usize::MAX {
                        oracle[v] = c;
                        stack.push(v);
                    }
                }
            }
            c += 1;
        }
        for i in 0..n {
            for j in 0..n {
                assert_eq!(comp[i] == comp[j], oracle[i] == oracle[j]);
            }
        }
    }
}
