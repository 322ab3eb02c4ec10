//! Seeded instance generators shared by tests, the acceptance suite, the CLI
//! bench command, and the criterion benches. All generators are deterministic
//! given the RNG state.

use crate::graph::{EdgeId, WeightedGraph};
use crate::lca::LcaIndex;
use crate::matrix::SparseSymmetricMatrix;
use rand::Rng;

/// Log-uniform weight over `orders` decades below 1 (so weights span
/// `[10^-orders, 1]`).
fn weight(rng: &mut impl Rng, orders: f64) -> f64 {
    10f64.powf(rng.gen_range(-orders..=0.0))
}

/// rows × cols grid with log-uniform weights.
pub fn grid(rows: usize, cols: usize, rng: &mut impl Rng, orders: f64) -> WeightedGraph {
    let at = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((at(r, c), at(r, c + 1), weight(rng, orders)));
            }
            if r + 1 < rows {
                edges.push((at(r, c), at(r + 1, c), weight(rng, orders)));
            }
        }
    }
    WeightedGraph::new(rows * cols, &edges).expect("grid edges are valid")
}

/// Random connected graph: a random spanning tree plus `extra` random edges
/// (self-loops skipped, parallel edges allowed and merged by the Laplacian).
pub fn connected_graph(n: usize, extra: usize, rng: &mut impl Rng, orders: f64) -> WeightedGraph {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v, weight(rng, orders)));
    }
    let mut added = 0;
    while added < extra && n >= 2 {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            edges.push((u, v, weight(rng, orders)));
            added += 1;
        }
    }
    WeightedGraph::new(n, &edges).expect("generated edges are valid")
}

/// Random tree plus exactly `k` distinct non-tree edges.
pub fn tree_plus(n: usize, k: usize, rng: &mut impl Rng, orders: f64) -> WeightedGraph {
    let mut edges = Vec::new();
    let mut present = std::collections::HashSet::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.push((u, v, weight(rng, orders)));
        present.insert((u.min(v), u.max(v)));
    }
    let mut added = 0;
    let mut guard = 0;
    while added < k && guard < 100 * (k + 1) {
        guard += 1;
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v && present.insert((u.min(v), u.max(v))) {
            edges.push((u, v, weight(rng, orders)));
            added += 1;
        }
    }
    WeightedGraph::new(n, &edges).expect("generated edges are valid")
}

/// PSDDD matrix with a mix of signs on the off-diagonals (so the Gremban
/// transform is exercised) and strictly positive diagonal excess, hence
/// nonsingular. Connected off-diagonal support.
pub fn gremban_psddd(n: usize, rng: &mut impl Rng) -> SparseSymmetricMatrix {
    let mut triplets = Vec::new();
    let mut row_abs = vec![0.0f64; n];
    let mut push = |i: usize, j: usize, v: f64, row_abs: &mut Vec<f64>| {
        triplets.push((i, j, v));
        row_abs[i] += v.abs();
        row_abs[j] += v.abs();
    };
    // random spanning tree with signed weights guarantees connectivity
    for v in 1..n {
        let u = rng.gen_range(0..v);
        let w = weight(rng, 2.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        push(u, v, w, &mut row_abs);
    }
    for _ in 0..n {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            let w = weight(rng, 2.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
            push(u, v, w, &mut row_abs);
        }
    }
    for (i, &ra) in row_abs.iter().enumerate() {
        triplets.push((i, i, ra + 0.05 + rng.gen::<f64>()));
    }
    SparseSymmetricMatrix::from_upper_triplets(
        n,
        &triplets
            .into_iter()
            .map(|(i, j, v)| (i.min(j), i.max(j), v))
            .collect::<Vec<_>>(),
    )
    .expect("generated matrix is valid")
}

/// Deterministic BFS spanning tree of a connected graph; returns the chosen
/// edge ids and an LCA index whose path queries return edge ids.
pub fn any_spanning_tree(g: &WeightedGraph) -> (Vec<EdgeId>, LcaIndex) {
    let n = g.n_vertices();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for e in g.edges() {
        adj[e.u].push((e.v, e.id));
        adj[e.v].push((e.u, e.id));
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    let mut tree_ids = Vec::new();
    let mut seen = vec![false; n];
    let mut tree_adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(v, id) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    tree_ids.push(id);
                    tree_adj[u].push((v, id));
                    tree_adj[v].push((u, id));
                    queue.push_back(v);
                }
            }
        }
    }
    for a in &mut tree_adj {
        a.sort_unstable();
    }
    (tree_ids, LcaIndex::build(n, &tree_adj))
}

/// Random rhs made range-compatible by subtracting per-component means on
/// singular components.
pub fn compatible_rhs(
    n: usize,
    components: &[Vec<usize>],
    singular: &[bool],
    rng: &mut impl Rng,
) -> Vec<f64> {
    let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for (comp, &sing) in components.iter().zip(singular) {
        if sing && !comp.is_empty() {
            let mean: f64 = comp.iter().map(|&i| b[i]).sum::<f64>() / comp.len() as f64;
            for &i in comp {
                b[i] -= mean;
            }
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn grid_shape() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let g = grid(3, 4, &mut rng, 1.0);
        assert_eq!(g.n_vertices(), 12);
        assert_eq!(g.n_edges(), 3 * 3 + 2 * 4); // vertical + horizontal
        assert!(g.is_connected());
    }

    #[test]
    fn generators_are_connected_and_deterministic() {
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let g1 = connected_graph(30, 20, &mut r1, 6.0);
        let g2 = connected_graph(30, 20, &mut r2, 6.0);
        assert!(g1.is_connected());
        assert_eq!(g1.edges(), g2.edges());
        let t = tree_plus(25, 4, &mut r1, 2.0);
        assert!(t.is_connected());
        assert_eq!(t.n_edges(), 24 + 4);
    }

    #[test]
    fn gremban_matrix_is_psddd_with_positive_offdiag() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let a = gremban_psddd(20, &mut rng);
        assert_eq!(a.classification(), crate::matrix::Classification::PsdddGeneral);
        assert!(a.upper_triplets().iter().any(|&(i, j, v)| i != j && v > 0.0));
    }
}
