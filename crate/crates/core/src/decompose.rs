//! H-decomposition of a tree: cover the tree by vertex sets (W, σ) such that
//! each tree edge lies in exactly one set, each H-edge is charged to one set
//! (both endpoints inside) or a pair of sets (one endpoint in each), every
//! multi-vertex set carries H-weight at most φ, and the number of sets is
//! bounded by 4·w_tot(H)/φ.
//!
//! The construction is a single post-order pass. Child subtrees accumulate
//! into groups that are cut off once their pending H-weight reaches φ/2; a
//! node whose own incident weight pushes the total past φ is split into an
//! interior set and a singleton (singletons are exempt from the weight cap).
//! Each vertex "settles" exactly once, charging its pending H-edge endpoints
//! to the set it settles into; a set also contains the parent vertex at its
//! top boundary so the connecting tree edge is covered.

use crate::error::{Error, Result};

/// σ assignment of one H-edge: the set(s) its endpoints settled into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sigma {
    One(usize),
    Two(usize, usize),
}

impl Sigma {
    pub fn contains(&self, set: usize) -> bool {
        match *self {
            Sigma::One(a) => a == set,
            Sigma::Two(a, b) => a == set || b == set,
        }
    }
}

/// Output of [`decompose`]: vertex sets (sorted) and per-H-edge assignments.
#[derive(Debug, Clone)]
pub struct TreeDecomposition {
    pub sets: Vec<Vec<usize>>,
    /// Parallel to the input H list.
    pub sigma: Vec<Sigma>,
    /// Total H-weight charged to each set (counting each edge once per set).
    pub set_weights: Vec<f64>,
}

struct Builder<'a> {
    phi: f64,
    h: &'a [(usize, usize, f64)],
    pending: Vec<Vec<usize>>, // vertex -> incident H indices
    settled: Vec<bool>,
    sigma: Vec<Vec<usize>>, // h index -> set indices (deduped)
    sets: Vec<std::collections::BTreeSet<usize>>,
    set_weights: Vec<f64>,
    settled_into: Vec<usize>,
    mark: Vec<u64>, // per-h-edge token marks for union-weight scans
    token: u64,
}

impl<'a> Builder<'a> {
    fn new_set(&mut self) -> usize {
        self.sets.push(std::collections::BTreeSet::new());
        self.set_weights.push(0.0);
        self.sets.len() - 1
    }

    fn add_member(&mut self, set: usize, v: usize) {
        self.sets[set].insert(v);
    }

    /// Settle `v` into `set`: charge its pending H endpoints there.
    fn settle(&mut self, v: usize, set: usize) {
        debug_assert!(!self.settled[v]);
        self.settled[v] = true;
        self.settled_into[v] = set;
        self.sets[set].insert(v);
        for k in 0..self.pending[v].len() {
            let h_idx = self.pending[v][k];
            if !self.sigma[h_idx].contains(&set) {
                self.sigma[h_idx].push(set);
                self.set_weights[set] += self.h[h_idx].2;
            }
        }
    }

    fn fresh_token(&mut self) -> u64 {
        self.token += 1;
        self.token
    }

    /// Add `v`'s pending H-weight to a union scan under `token`; returns the
    /// newly counted weight.
    fn scan_vertex(&mut self, v: usize, token: u64) -> f64 {
        let mut add = 0.0;
        for k in 0..self.pending[v].len() {
            let h_idx = self.pending[v][k];
            if self.mark[h_idx] != token {
                self.mark[h_idx] = token;
                add += self.h[h_idx].2;
            }
        }
        add
    }
}

/// Decompose tree `(n, tree_edges)` (rooted at vertex 0) against weighted
/// edge set `h` with weight cap `phi`.
pub fn decompose(
    n: usize,
    tree_edges: &[(usize, usize)],
    h: &[(usize, usize, f64)],
    phi: f64,
) -> Result<TreeDecomposition> {
    if !(phi > 0.0) {
        return Err(Error::NonFinite(format!("phi = {phi} must be positive")));
    }
    if n == 0 {
        return Ok(TreeDecomposition { sets: Vec::new(), sigma: Vec::new(), set_weights: Vec::new() });
    }
    if tree_edges.len() + 1 != n {
        return Err(Error::NotAForest(format!(
            "{} edges cannot form a spanning tree on {n} vertices",
            tree_edges.len()
        )));
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in tree_edges {
        if a >= n || b >= n {
            return Err(Error::VertexOutOfRange { id: a.max(b), n });
        }
        adj[a].push(b);
        adj[b].push(a);
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    // rooted structure at 0
    let mut parent = vec![usize::MAX; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        order.push(u);
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                parent[v] = u;
                children[u].push(v);
                stack.push(v);
            }
        }
    }
    if order.len() != n {
        return Err(Error::NotAForest("tree edges do not connect all vertices".into()));
    }
    for c in &mut children {
        c.sort_unstable();
    }

    let mut pending = vec![Vec::new(); n];
    for (idx, &(a, b, w)) in h.iter().enumerate() {
        if a >= n || b >= n {
            return Err(Error::VertexOutOfRange { id: a.max(b), n });
        }
        if a == b {
            return Err(Error::SelfLoop(a));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::NonPositiveWeight { u: a, v: b, w });
        }
        pending[a].push(idx);
        pending[b].push(idx);
    }

    let mut b = Builder {
        phi,
        h,
        pending,
        settled: vec![false; n],
        sigma: vec![Vec::new(); h.len()],
        sets: Vec::new(),
        set_weights: Vec::new(),
        settled_into: vec![usize::MAX; n],
        mark: vec![0; h.len()],
        token: 0,
    };

    // open[v]: unsettled vertices of v's processed subtree (v last)
    let mut open: Vec<Vec<usize>> = vec![Vec::new(); n];

    // post-order via reversed preorder
    for &v in order.iter().rev() {
        let mut group: Vec<usize> = Vec::new();
        let mut token = b.fresh_token();
        let mut gw = 0.0;
        for ci in 0..children[v].len() {
            let c = children[v][ci];
            let child_open = std::mem::take(&mut open[c]);
            if child_open.is_empty() {
                continue;
            }
            for &u in &child_open {
                gw += b.scan_vertex(u, token);
            }
            group.extend(child_open);
            if gw >= phi / 2.0 {
                // cut the group off as one set, with v as its connector
                let set = b.new_set();
                for &u in &group {
                    b.settle(u, set);
                }
                b.add_member(set, v);
                group.clear();
                token = b.fresh_token();
                gw = 0.0;
            }
        }
        // v's own incident weight joins the leftover group
        gw += b.scan_vertex(v, token);
        let total = gw;

        if parent[v] == usize::MAX {
            finalize_root(&mut b, v, group, total);
        } else if total < phi / 2.0 {
            group.push(v);
            open[v] = group;
        } else if total <= phi {
            let set = b.new_set();
            for &u in &group {
                b.settle(u, set);
            }
            b.settle(v, set);
            b.add_member(set, parent[v]);
        } else {
            // interior set plus singleton: the singleton absorbs v's own
            // (possibly heavy) incident weight and is exempt from the cap
            let w1 = b.new_set();
            for &u in &group {
                b.settle(u, w1);
            }
            b.add_member(w1, v);
            b.add_member(w1, parent[v]);
            let w2 = b.new_set();
            b.settle(v, w2);
        }
    }

    let sigma = b
        .sigma
        .into_iter()
        .map(|s| match s.len() {
            1 => Sigma::One(s[0]),
            2 => Sigma::Two(s[0], s[1]),
            k => unreachable!("H edge charged to {k} sets"),
        })
        .collect();
    let sets = b.sets.into_iter().map(|s| s.into_iter().collect()).collect();
    Ok(TreeDecomposition { sets, sigma, set_weights: b.set_weights })
}

fn finalize_root(b: &mut Builder, root: usize, mut group: Vec<usize>, total: f64) {
    let phi = b.phi;
    group.push(root);
    if total > phi {
        let w1 = b.new_set();
        for &u in &group[..group.len() - 1] {
            b.settle(u, w1);
        }
        b.add_member(w1, root);
        let w2 = b.new_set();
        b.settle(root, w2);
        return;
    }
    if total >= phi / 2.0 || b.sets.is_empty() {
        // either heavy enough to stand alone, or the whole tree fits one set
        let set = b.new_set();
        for &u in &group {
            b.settle(u, set);
        }
        return;
    }
    // Fold the light remnant into a set that already shares a vertex with it
    // (so no tree edge gains a second covering set) when the cap allows;
    // otherwise emit the remnant as its own final set.
    let remnant: std::collections::HashSet<usize> = group.iter().copied().collect();
    let fit = (0..b.sets.len())
        .filter(|&s| b.sets[s].iter().any(|v| remnant.contains(v)))
        .filter(|&s| b.set_weights[s] + total <= phi * (1.0 + 1e-12))
        .min_by(|&a, &bb| {
            b.set_weights[a]
                .partial_cmp(&b.set_weights[bb])
                .unwrap()
                .then(a.cmp(&bb))
        });
    match fit {
        Some(set) => {
            for &u in &group {
                b.settle(u, set);
            }
        }
        None => {
            let set = b.new_set();
            for &u in &group {
                b.settle(u, set);
            }
        }
    }
}

/// Check all decomposition properties directly; returns a description of the
/// first violation. Used by tests and the acceptance audit.
pub fn audit_decomposition(
    n: usize,
    tree_edges: &[(usize, usize)],
    h: &[(usize, usize, f64)],
    phi: f64,
    td: &TreeDecomposition,
) -> std::result::Result<(), String> {
    // property 1: each set induces a connected subtree
    for (si, set) in td.sets.iter().enumerate() {
        if set.is_empty() {
            return Err(format!("set {si} is empty"));
        }
        let inset: std::collections::HashSet<usize> = set.iter().copied().collect();
        let mut adj = std::collections::HashMap::new();
        for &(a, bb) in tree_edges {
            if inset.contains(&a) && inset.contains(&bb) {
                adj.entry(a).or_insert_with(Vec::new).push(bb);
                adj.entry(bb).or_insert_with(Vec::new).push(a);
            }
        }
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![set[0]];
        seen.insert(set[0]);
        while let Some(u) = stack.pop() {
            if let Some(ns) = adj.get(&u) {
                for &v in ns {
                    if seen.insert(v) {
                        stack.push(v);
                    }
                }
            }
        }
        if seen.len() != set.len() {
            return Err(format!("set {si} does not induce a connected subtree"));
        }
    }
    // property 2: each tree edge in exactly one set
    for &(a, bb) in tree_edges {
        let covering = td
            .sets
            .iter()
            .filter(|s| s.binary_search(&a).is_ok() && s.binary_search(&bb).is_ok())
            .count();
        if covering != 1 {
            return Err(format!("tree edge ({a},{bb}) lies in {covering} sets, want 1"));
        }
    }
    // property 3: endpoint placement
    for (idx, &(a, bb, _)) in h.iter().enumerate() {
        match td.sigma[idx] {
            Sigma::One(s) => {
                let set = &td.sets[s];
                if set.binary_search(&a).is_err() || set.binary_search(&bb).is_err() {
                    return Err(format!("H edge {idx}: |sigma|=1 but endpoints not both in set {s}"));
                }
            }
            Sigma::Two(s1, s2) => {
                let in1 = |v: usize| td.sets[s1].binary_search(&v).is_ok();
                let in2 = |v: usize| td.sets[s2].binary_search(&v).is_ok();
                if !((in1(a) && in2(bb)) || (in1(bb) && in2(a))) {
                    return Err(format!(
                        "H edge {idx}: endpoints ({a},{bb}) not split across sets {s1},{s2}"
                    ));
                }
            }
        }
    }
    // weight cap for multi-vertex sets
    let mut weights = vec![0.0f64; td.sets.len()];
    for (idx, &(_, _, w)) in h.iter().enumerate() {
        match td.sigma[idx] {
            Sigma::One(s) => weights[s] += w,
            Sigma::Two(s1, s2) => {
                weights[s1] += w;
                weights[s2] += w;
            }
        }
    }
    for (si, set) in td.sets.iter().enumerate() {
        if set.len() > 1 && weights[si] > phi * (1.0 + 1e-9) {
            return Err(format!(
                "set {si} (|W| = {}) has weight {} > phi = {phi}",
                set.len(),
                weights[si]
            ));
        }
    }
    // set count
    let w_tot: f64 = h.iter().map(|&(_, _, w)| w).sum();
    let bound = (4.0 * w_tot / phi).max(1.0);
    if (td.sets.len() as f64) > bound + 1e-9 {
        return Err(format!(
            "{} sets exceeds bound max(1, 4*w_tot/phi) = {bound}",
            td.sets.len()
        ));
    }
    // every vertex appears in at least one set
    let mut covered = vec![false; n];
    for set in &td.sets {
        for &v in set {
            covered[v] = true;
        }
    }
    if let Some(v) = covered.iter().position(|&c| !c) {
        return Err(format!("vertex {v} not covered by any set"));
    }
    Ok(())
}
