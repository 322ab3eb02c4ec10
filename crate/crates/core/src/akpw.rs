//! The Alon–Karp–Peleg–West spanning-tree machinery: weight-class bucketing,
//! Awerbuch-style clustering, contraction, and the per-level records consumed
//! by the preconditioner.

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeId, WeightedGraph};
use std::collections::BTreeMap;

/// Parameters of the construction. Logarithms are base 2 throughout; `x` is
/// clamped below by 2 so the schedule is defined at small `n`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ParameterSchedule {
    pub n: usize,
    pub m: usize,
    pub x: f64,
    pub rho: usize,
    pub mu: f64,
    pub y: f64,
}

impl ParameterSchedule {
    pub fn for_graph(n: usize, m: usize) -> Self {
        let n_eff = n.max(2) as f64;
        let log_n = n_eff.log2();
        let log_log_n = log_n.max(2.0).log2();
        let x = 2f64.powf((log_n * log_log_n).sqrt()).max(2.0);
        let rho = ((3.0 * log_n / x.log2()).ceil() as usize).max(1);
        let mu = 9.0 * rho as f64 * log_n;
        let y = x * mu;
        debug_assert!(y > 3.51155);
        ParameterSchedule { n, m, x, rho, mu, y }
    }

    /// θ^(j) for 1-based level j.
    pub fn theta(&self, j: usize) -> f64 {
        if j <= self.rho {
            self.x.powi(j as i32 - 1)
        } else {
            self.x.powi(self.rho as i32) * self.y.powi((j - self.rho) as i32 - 1)
        }
    }

    /// τ(j, l): the embedding weight for an edge settled at level j routed over
    /// an edge of weight class l.
    pub fn tau(&self, j: usize, l: usize) -> f64 {
        let diff = j as i64 - l as i64;
        if diff < self.rho as i64 {
            1.0
        } else {
            let q = (diff - self.rho as i64 + 1) as f64;
            q * q / self.y.powf(q)
        }
    }

    /// Weight class of an edge: the `i >= 1` with `wmax/y^i < w <= wmax/y^(i-1)`.
    pub fn weight_class(&self, w: f64, wmax: f64) -> usize {
        debug_assert!(w > 0.0 && wmax > 0.0 && w <= wmax);
        let t = (wmax / w).ln() / self.y.ln();
        let mut i = t.floor() as i64 + 1;
        if i < 1 {
            i = 1;
        }
        // float-boundary repair: enforce the defining bracket
        let upper = |i: i64| wmax / self.y.powi(i as i32 - 1);
        let lower = |i: i64| wmax / self.y.powi(i as i32);
        if w > upper(i) && i > 1 {
            i -= 1;
        } else if w <= lower(i) {
            i += 1;
        }
        i as usize
    }
}

/// Per-level record kept by [`akpw`].
#[derive(Debug, Clone)]
pub struct LevelRecord {
    /// 1-based level number.
    pub j: usize,
    /// Original edge ids chosen into the forest R^j at this level.
    pub forest_edges: Vec<EdgeId>,
    /// Original edge ids settled at this level (H^j): crossing before, not after.
    pub settled: Vec<EdgeId>,
    /// |E_i^j|: crossing-edge count per class at the start of the level.
    pub crossing_before: BTreeMap<usize, usize>,
    /// Tree of F^(j+1) containing each original vertex (tree ids are dense).
    pub tree_after: Vec<usize>,
    /// Maximum BFS depth over the clusters grown at this level.
    pub max_cluster_depth: usize,
    /// Number of vertices of the contracted graph the level ran on.
    pub contracted_n: usize,
}

/// Everything the preconditioner needs from the AKPW run.
#[derive(Debug, Clone)]
pub struct LevelRecords {
    pub params: ParameterSchedule,
    /// Largest input weight; classes are brackets of w/weight_scale.
    pub weight_scale: f64,
    /// Weight class per original edge id.
    pub eindex: Vec<usize>,
    /// |E_i| per class.
    pub class_sizes: BTreeMap<usize, usize>,
    pub levels: Vec<LevelRecord>,
}

impl LevelRecords {
    /// Edge ids of the forest F^(j+1) = R^1 ∪ … ∪ R^j (1-based j; j = levels.len()
    /// gives the final spanning tree).
    pub fn forest_upto(&self, j: usize) -> Vec<EdgeId> {
        self.levels[..j]
            .iter()
            .flat_map(|l| l.forest_edges.iter().copied())
            .collect()
    }
}

/// Spanning forest produced by [`cluster`].
#[derive(Debug, Clone)]
pub struct ClusterForest {
    /// Indices into the input graph's edge list.
    pub tree_edges: Vec<usize>,
    /// Tree id per vertex (dense, in order of tree creation).
    pub assignment: Vec<usize>,
    /// BFS depth per tree.
    pub depths: Vec<usize>,
}

/// Grow a spanning forest of `g` such that, for every class, the number of
/// intra-tree class edges is at least `x` times the inter-tree class edges,
/// while every tree has BFS depth at most `3·x·k·log2(n)`.
///
/// `classes` are disjoint lists of edge indices into `g.edges()`; edges outside
/// all classes are ignored entirely.
pub fn cluster(g: &WeightedGraph, x: f64, classes: &[Vec<usize>]) -> ClusterForest {
    let n = g.n_vertices();
    let k = classes.len();
    let mut class_of_edge: Vec<Option<usize>> = vec![None; g.n_edges()];
    for (ci, cls) in classes.iter().enumerate() {
        for &eidx in cls {
            class_of_edge[eidx] = Some(ci);
        }
    }
    // adjacency over class edges only, sorted for determinism
    let mut adj: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); n];
    for (eidx, e) in g.edges().iter().enumerate() {
        if let Some(ci) = class_of_edge[eidx] {
            adj[e.u].push((e.v, eidx, ci));
            adj[e.v].push((e.u, eidx, ci));
        }
    }
    for a in &mut adj {
        a.sort_unstable();
    }

    const UNASSIGNED: usize = usize::MAX;
    let mut assignment = vec![UNASSIGNED; n];
    let mut tree_edges = Vec::new();
    let mut depths = Vec::new();
    let mut intra = vec![0usize; k];
    let mut cut = vec![0usize; k];

    for seed in 0..n {
        if assignment[seed] != UNASSIGNED {
            continue;
        }
        let tid = depths.len();
        assignment[seed] = tid;
        intra.iter_mut().for_each(|c| *c = 0);
        cut.iter_mut().for_each(|c| *c = 0);
        for &(v, _, ci) in &adj[seed] {
            if assignment[v] == UNASSIGNED {
                cut[ci] += 1;
            }
        }
        let mut frontier = vec![seed];
        let mut depth = 0usize;
        loop {
            let violated = (0..k).any(|ci| (intra[ci] as f64) < x * cut[ci] as f64);
            if !violated {
                break;
            }
            // expand one BFS level across all class edges
            let mut next = Vec::new();
            for &u in &frontier {
                for &(v, eidx, _) in &adj[u] {
                    if assignment[v] == UNASSIGNED {
                        assignment[v] = tid;
                        tree_edges.push(eidx);
                        next.push(v);
                        for &(w2, _, ci2) in &adj[v] {
                            if assignment[w2] == tid {
                                // was counted as cut from the tree side
                                cut[ci2] -= 1;
                                intra[ci2] += 1;
                            } else if assignment[w2] == UNASSIGNED {
                                cut[ci2] += 1;
                            }
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            depth += 1;
            frontier = next;
        }
        depths.push(depth);
    }
    ClusterForest { tree_edges, assignment, depths }
}

/// Contract each tree of the forest to a single vertex. Self-loops are dropped
/// (returned as `settled`); parallel edges are kept with classes, weights and
/// ids preserved.
pub fn contract(g: &WeightedGraph, forest_edge_indices: &[usize]) -> Result<Contraction> {
    let n = g.n_vertices();
    let mut dsu = Dsu::new(n);
    for &eidx in forest_edge_indices {
        let e = &g.edges()[eidx];
        if !dsu.union(e.u, e.v) {
            return Err(Error::NotAForest(format!(
                "edge {} closes a cycle in the forest",
                e.id
            )));
        }
    }
    // dense renumber in vertex order for determinism
    let mut new_id = vec![usize::MAX; n];
    let mut next = 0usize;
    let mut map = vec![0usize; n];
    for v in 0..n {
        let r = dsu.find(v);
        if new_id[r] == usize::MAX {
            new_id[r] = next;
            next += 1;
        }
        map[v] = new_id[r];
    }
    let mut kept = Vec::new();
    let mut settled = Vec::new();
    for e in g.edges() {
        let (nu, nv) = (map[e.u], map[e.v]);
        if nu == nv {
            settled.push(e.id);
        } else {
            kept.push(Edge { u: nu, v: nv, w: e.w, id: e.id });
        }
    }
    let contracted = WeightedGraph::from_edges(next, kept)?;
    Ok(Contraction { graph: contracted, vertex_map: map, settled })
}

#[derive(Debug, Clone)]
pub struct Contraction {
    pub graph: WeightedGraph,
    /// old vertex -> new vertex
    pub vertex_map: Vec<usize>,
    /// edge ids that became self-loops
    pub settled: Vec<EdgeId>,
}

struct Dsu {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect(), rank: vec![0; n] }
    }
    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (hi, lo) = if self.rank[ra] >= self.rank[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[lo] = hi;
        if self.rank[ra] == self.rank[rb] {
            self.rank[hi] += 1;
        }
        true
    }
}

/// Output of [`akpw`]: the spanning tree (as original edge ids) and the level
/// records needed to build and analyze the preconditioner.
#[derive(Debug, Clone)]
pub struct AkpwOutput {
    pub tree: Vec<EdgeId>,
    pub records: LevelRecords,
}

/// Build the AKPW spanning tree of a connected graph by iterated clustering
/// and contraction over weight classes.
pub fn akpw(g: &WeightedGraph) -> Result<AkpwOutput> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = g.n_vertices();
    let m = g.n_edges();
    let params = ParameterSchedule::for_graph(n, m);

    let wmax = g
        .edges()
        .iter()
        .map(|e| e.w)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut eindex = vec![0usize; m];
    let mut class_sizes: BTreeMap<usize, usize> = BTreeMap::new();
    let mut max_class = 1usize;
    for (idx, e) in g.edges().iter().enumerate() {
        let c = params.weight_class(e.w, wmax);
        eindex[idx] = c;
        *class_sizes.entry(c).or_insert(0) += 1;
        max_class = max_class.max(c);
    }
    // edges are id-indexed in the original graph
    debug_assert!(g.edges().iter().enumerate().all(|(i, e)| e.id == i));

    let mut records = LevelRecords {
        params: params.clone(),
        weight_scale: wmax,
        eindex,
        class_sizes,
        levels: Vec::new(),
    };

    let mut tree: Vec<EdgeId> = Vec::new();
    let mut current = g.clone();
    // original vertex -> contracted vertex
    let mut super_of: Vec<usize> = (0..n).collect();
    let mut j = 0usize;
    let level_cap = max_class + params.rho + (m.max(2) as f64).log2().ceil() as usize + 8;

    while current.n_vertices() > 1 {
        j += 1;
        if j > level_cap {
            return Err(Error::NotAForest(format!(
                "AKPW failed to converge within {level_cap} levels"
            )));
        }
        // crossing counts per class at level start
        let mut crossing: BTreeMap<usize, usize> = BTreeMap::new();
        for e in current.edges() {
            *crossing.entry(records.eindex[e.id]).or_insert(0) += 1;
        }
        // buckets: classes j-rho+1 ..= j, as indices into current edges
        let lo_class = j.saturating_sub(params.rho - 1).max(1);
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); params.rho];
        for (idx, e) in current.edges().iter().enumerate() {
            let c = records.eindex[e.id];
            if c >= lo_class && c <= j {
                // bucket position: class j maps to the last slot
                buckets[params.rho - 1 - (j - c)].push(idx);
            }
        }
        let forest = cluster(&current, params.x, &buckets);
        let forest_ids: Vec<EdgeId> = forest
            .tree_edges
            .iter()
            .map(|&idx| current.edges()[idx].id)
            .collect();
        let contraction = contract(&current, &forest.tree_edges)?;

        for s in super_of.iter_mut() {
            *s = contraction.vertex_map[*s];
        }
        records.levels.push(LevelRecord {
            j,
            forest_edges: forest_ids.clone(),
            settled: contraction.settled.clone(),
            crossing_before: crossing,
            tree_after: super_of.clone(),
            max_cluster_depth: forest.depths.iter().copied().max().unwrap_or(0),
            contracted_n: current.n_vertices(),
        });
        tree.extend(forest_ids);
        current = contraction.graph;
    }

    Ok(AkpwOutput { tree, records })
}

/// Audit Lemma-style edge reduction: `|E_i^j| <= |E_i| / x^(j-i)` for all
/// classes i and levels j, and `E_i^j = 0` once `j - i >= rho`.
pub fn audit_edge_reduction(records: &LevelRecords) -> std::result::Result<(), String> {
    let x = records.params.x;
    let rho = records.params.rho;
    for level in &records.levels {
        let j = level.j;
        for (&i, &count) in &level.crossing_before {
            if j >= i {
                let total = records.class_sizes[&i] as f64;
                let bound = total / x.powi((j - i) as i32);
                if count as f64 > bound + 1e-9 {
                    return Err(format!(
                        "|E_{i}^{j}| = {count} exceeds |E_{i}|/x^(j-i) = {bound}"
                    ));
                }
                if j - i >= rho && count > 0 {
                    return Err(format!("E_{i}^{j} nonempty at depth j-i = {} >= rho", j - i));
                }
            }
        }
    }
    Ok(())
}
