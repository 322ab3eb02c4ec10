//! Preconditioner construction: run AKPW, decompose the per-level forests
//! against the settled edges, pick one maximum-weight representative edge per
//! set pair as augmentation, and build the weighted embedding whose congestion
//! certifies κ_f(A, B).

use crate::akpw::{akpw, LevelRecords};
use crate::decompose::{decompose, Sigma, TreeDecomposition};
use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeId, WeightedGraph};
use crate::lca::LcaIndex;
use crate::matrix::vec as vecmath;
use crate::support::{congestion_certificate, EmbeddedPath, WeightedEmbedding};
use std::collections::{BTreeMap, HashMap};

/// Certificate summary exported with solve and certify reports.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CertificateReport {
    /// max_f wcong(π, f): certified upper bound on κ_f(A, B).
    pub bound: f64,
    /// Maximum congestion contribution per settling level.
    pub per_level_max: Vec<(usize, f64)>,
    pub r_size: usize,
    pub s_size: usize,
    pub rho: usize,
    pub x: f64,
    pub y: f64,
    /// The explicit analytic chain (ρ+1)(2ρ+5)μ^ρ y² m/t.
    pub theory_chain_bound: f64,
    /// Number of times φ was floored at eps·w_tot(H).
    pub phi_floor_events: usize,
}

/// Spanning tree R, augmentation edges S, and the embedding certificate.
#[derive(Debug, Clone)]
pub struct PreconditionerGraph {
    pub tree: Vec<EdgeId>,
    pub augmentation: Vec<EdgeId>,
    pub t: usize,
    /// Graph of R ∪ S (subgraph of the input, ids preserved).
    pub b_graph: WeightedGraph,
    pub embedding: WeightedEmbedding,
    pub certificate: CertificateReport,
    pub records: LevelRecords,
    pub gremban_cover_mode: bool,
    /// Settling level (1-based) per input edge id.
    pub settle_level: Vec<usize>,
}

struct LevelForest {
    /// Edge ids of F^(j+1).
    fedges: Vec<EdgeId>,
    lca: LcaIndex,
}

struct TreeDecomp {
    local_of: HashMap<usize, usize>,
    td: TreeDecomposition,
    /// Representative (max weight) edge per σ-class.
    rep: BTreeMap<(usize, usize), EdgeId>,
}

struct Routing {
    /// Per edge id: index into `decomps` plus the local H index there.
    route: Vec<Option<(usize, usize)>>,
    decomps: Vec<TreeDecomp>,
    level_forests: Vec<LevelForest>,
    settle_level: Vec<usize>,
    s_set: std::collections::BTreeSet<EdgeId>,
    phi_floor_events: usize,
}

fn build_level_forest(g: &WeightedGraph, fedges: Vec<EdgeId>) -> LevelForest {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); g.n_vertices()];
    for (pos, &id) in fedges.iter().enumerate() {
        let e = &g.edges()[id];
        adj[e.u].push((e.v, pos));
        adj[e.v].push((e.u, pos));
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    let lca = LcaIndex::build(g.n_vertices(), &adj);
    LevelForest { fedges, lca }
}

/// Remove cycles from a walk, yielding the simple path between its endpoints.
fn simplify_walk(g: &WeightedGraph, start: usize, walk: &[EdgeId]) -> Vec<EdgeId> {
    let mut stack_v: Vec<usize> = vec![start];
    let mut stack_e: Vec<EdgeId> = Vec::new();
    let mut pos_of: HashMap<usize, usize> = HashMap::new();
    pos_of.insert(start, 0);
    for &id in walk {
        let e = &g.edges()[id];
        let at = *stack_v.last().unwrap();
        let next = e.other(at);
        if let Some(&p) = pos_of.get(&next) {
            // unwind the cycle back to the first visit of `next`
            while stack_v.len() > p + 1 {
                let dropped = stack_v.pop().unwrap();
                pos_of.remove(&dropped);
                stack_e.pop();
            }
        } else {
            pos_of.insert(next, stack_v.len());
            stack_v.push(next);
            stack_e.push(id);
        }
    }
    stack_e
}

/// Run the per-level decompositions, choosing S and recording routing data.
fn decompose_levels(g: &WeightedGraph, t: usize, records: &LevelRecords) -> Result<Routing> {
    let n = g.n_vertices();
    let m = g.n_edges();
    let params = &records.params;
    let mut route: Vec<Option<(usize, usize)>> = vec![None; m];
    let mut settle_level = vec![0usize; m];
    let mut decomps: Vec<TreeDecomp> = Vec::new();
    let mut level_forests: Vec<LevelForest> = Vec::new();
    let mut s_set = std::collections::BTreeSet::new();
    let mut phi_floor_events = 0usize;

    let mut cumulative: Vec<EdgeId> = Vec::new();
    for level in &records.levels {
        cumulative.extend(level.forest_edges.iter().copied());
        level_forests.push(build_level_forest(g, cumulative.clone()));
        let j = level.j;

        // group settled edges by their F^(j+1) tree
        let mut by_tree: BTreeMap<usize, Vec<EdgeId>> = BTreeMap::new();
        for &id in &level.settled {
            settle_level[id] = j;
            let e = &g.edges()[id];
            let tu = level.tree_after[e.u];
            debug_assert_eq!(tu, level.tree_after[e.v], "settled edge must be intra-tree");
            by_tree.entry(tu).or_default().push(id);
        }
        if by_tree.is_empty() {
            continue;
        }
        // vertices and forest edges per tree
        let mut verts_by_tree: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in 0..n {
            verts_by_tree
                .entry(level.tree_after[v])
                .or_default()
                .push(v);
        }
        let mut fedges_by_tree: BTreeMap<usize, Vec<EdgeId>> = BTreeMap::new();
        for &id in &cumulative {
            let e = &g.edges()[id];
            fedges_by_tree
                .entry(level.tree_after[e.u])
                .or_default()
                .push(id);
        }

        for (tree_id, h_ids) in by_tree {
            let vertices = verts_by_tree.remove(&tree_id).expect("tree has vertices");
            let local_of: HashMap<usize, usize> =
                vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let tree_edges: Vec<(usize, usize)> = fedges_by_tree
                .get(&tree_id)
                .map(|ids| {
                    ids.iter()
                        .map(|&id| {
                            let e = &g.edges()[id];
                            (local_of[&e.u], local_of[&e.v])
                        })
                        .collect()
                })
                .unwrap_or_default();
            // weights enter the decomposition normalized so the largest input
            // weight is 1, matching the count-scaled cap φ = m/(t·θ)
            let h: Vec<(usize, usize, f64)> = h_ids
                .iter()
                .map(|&id| {
                    let e = &g.edges()[id];
                    (local_of[&e.u], local_of[&e.v], e.w / records.weight_scale)
                })
                .collect();
            let w_tot: f64 = h.iter().map(|&(_, _, w)| w).sum();
            let mut phi = m as f64 / (t as f64 * params.theta(j));
            let floor = f64::EPSILON * w_tot;
            if !(phi > floor) {
                phi = floor.max(f64::MIN_POSITIVE);
                phi_floor_events += 1;
            }
            let td = decompose(vertices.len(), &tree_edges, &h, phi)?;

            // representative (max weight, then min id) edge per σ-class
            let mut rep: BTreeMap<(usize, usize), EdgeId> = BTreeMap::new();
            for (hl, &id) in h_ids.iter().enumerate() {
                let key = match td.sigma[hl] {
                    Sigma::One(s) => (s, s),
                    Sigma::Two(s1, s2) => (s1.min(s2), s1.max(s2)),
                };
                let w = g.edges()[id].w;
                let better = match rep.get(&key) {
                    None => true,
                    Some(&old) => {
                        let ow = g.edges()[old].w;
                        w > ow || (w == ow && id < old)
                    }
                };
                if better {
                    rep.insert(key, id);
                }
            }
            for &id in rep.values() {
                s_set.insert(id);
            }
            let didx = decomps.len();
            for (hl, &id) in h_ids.iter().enumerate() {
                route[id] = Some((didx, hl));
            }
            decomps.push(TreeDecomp { local_of, td, rep });
        }
    }
    Ok(Routing { route, decomps, level_forests, settle_level, s_set, phi_floor_events })
}

fn tree_path(g: &WeightedGraph, lf: &LevelForest, u: usize, v: usize) -> Result<Vec<EdgeId>> {
    lf.lca
        .path_edges(u, v)
        .map(|positions| positions.into_iter().map(|p| lf.fedges[p]).collect())
        .ok_or_else(|| {
            let _ = g;
            Error::InvalidEmbedding(format!("vertices {u},{v} not in one forest tree"))
        })
}

/// Build the paths and π weights for every input edge.
fn build_embedding_core(
    g: &WeightedGraph,
    records: &LevelRecords,
    routing: &Routing,
    in_b: &std::collections::BTreeSet<EdgeId>,
) -> Result<WeightedEmbedding> {
    let params = &records.params;
    let mut paths = Vec::with_capacity(g.n_edges());
    for e in g.edges() {
        if in_b.contains(&e.id) {
            paths.push(EmbeddedPath { edges: vec![e.id], pi: vec![1.0] });
            continue;
        }
        let (didx, hl) = routing.route[e.id].ok_or_else(|| {
            Error::InvalidEmbedding(format!("edge {} never settled", e.id))
        })?;
        let j = routing.settle_level[e.id];
        let lf = &routing.level_forests[j - 1];
        let dc = &routing.decomps[didx];
        let walk: Vec<EdgeId> = match dc.td.sigma[hl] {
            Sigma::One(_) => tree_path(g, lf, e.u, e.v)?,
            Sigma::Two(s1, s2) => {
                let key = (s1.min(s2), s1.max(s2));
                let a_id = dc.rep[&key];
                if a_id == e.id {
                    // the representative itself is in B; unreachable here
                    vec![e.id]
                } else {
                    let a = &g.edges()[a_id];
                    // orient a so its first endpoint shares u's σ-set
                    let (su, _sv) = {
                        let lu = dc.local_of[&e.u];
                        if dc.td.sets[s1].binary_search(&lu).is_ok() {
                            (s1, s2)
                        } else {
                            (s2, s1)
                        }
                    };
                    let la_u = dc.local_of[&a.u];
                    let (p, q) = if dc.td.sets[su].binary_search(&la_u).is_ok() {
                        (a.u, a.v)
                    } else {
                        (a.v, a.u)
                    };
                    let mut w = tree_path(g, lf, e.u, p)?;
                    w.push(a_id);
                    w.extend(tree_path(g, lf, q, e.v)?);
                    w
                }
            }
        };
        let simple = simplify_walk(g, e.u, &walk);
        let pi: Vec<f64> = simple
            .iter()
            .map(|&f| params.tau(j, records.eindex[f]))
            .collect();
        paths.push(EmbeddedPath { edges: simple, pi });
    }
    Ok(WeightedEmbedding { paths })
}

fn certificate_report(
    g: &WeightedGraph,
    b_graph: &WeightedGraph,
    emb: &WeightedEmbedding,
    records: &LevelRecords,
    settle_level: &[usize],
    s_size: usize,
    t: usize,
    phi_floor_events: usize,
) -> Result<CertificateReport> {
    let report = congestion_certificate(g, b_graph, emb)?;
    // per-level congestion maxima
    let h = records.levels.len();
    let mut per_level: Vec<BTreeMap<EdgeId, Vec<f64>>> = vec![BTreeMap::new(); h + 1];
    for e in g.edges() {
        let lvl = settle_level[e.id].min(h);
        let path = &emb.paths[e.id];
        for (&f, &pi) in path.edges.iter().zip(&path.pi) {
            per_level[lvl]
                .entry(f)
                .or_default()
                .push(report.dilations[e.id] * pi);
        }
    }
    let per_level_max: Vec<(usize, f64)> = per_level
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(lvl, m)| {
            let mx = m
                .values()
                .map(|terms| vecmath::pairwise_sum(terms))
                .fold(0.0f64, f64::max);
            (lvl, mx)
        })
        .collect();
    let p = &records.params;
    let rho = p.rho as f64;
    let ln_chain = (rho + 1.0).ln()
        + (2.0 * rho + 5.0).ln()
        + rho * p.mu.ln()
        + 2.0 * p.y.ln()
        + (g.n_edges().max(1) as f64).ln()
        - (t as f64).ln();
    Ok(CertificateReport {
        bound: report.bound,
        per_level_max,
        r_size: 0, // filled by caller
        s_size,
        rho: p.rho,
        x: p.x,
        y: p.y,
        theory_chain_bound: ln_chain.exp(),
        phi_floor_events,
    })
}

/// Build the preconditioner for a connected graph: spanning tree R (AKPW),
/// augmentation edges S (one max-weight representative per decomposition set
/// pair, per level), and the certified embedding.
pub fn precondition(g: &WeightedGraph, t: usize) -> Result<PreconditionerGraph> {
    let n = g.n_vertices();
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    if t < 1 || t > n.max(1) {
        return Err(Error::TOutOfRange { t, n });
    }
    if n <= 1 {
        let records = LevelRecords {
            params: crate::akpw::ParameterSchedule::for_graph(n, 0),
            weight_scale: 1.0,
            eindex: Vec::new(),
            class_sizes: BTreeMap::new(),
            levels: Vec::new(),
        };
        return Ok(PreconditionerGraph {
            tree: Vec::new(),
            augmentation: Vec::new(),
            t,
            b_graph: WeightedGraph::new(n, &[])?,
            embedding: WeightedEmbedding { paths: Vec::new() },
            certificate: CertificateReport {
                bound: 1.0,
                per_level_max: Vec::new(),
                r_size: 0,
                s_size: 0,
                rho: records.params.rho,
                x: records.params.x,
                y: records.params.y,
                theory_chain_bound: 1.0,
                phi_floor_events: 0,
            },
            records,
            gremban_cover_mode: false,
            settle_level: Vec::new(),
        });
    }

    let out = akpw(g)?;
    let routing = decompose_levels(g, t, &out.records)?;

    let tree_set: std::collections::BTreeSet<EdgeId> = out.tree.iter().copied().collect();
    let s_only: Vec<EdgeId> = routing
        .s_set
        .iter()
        .copied()
        .filter(|id| !tree_set.contains(id))
        .collect();
    let mut in_b = tree_set.clone();
    in_b.extend(routing.s_set.iter().copied());

    let b_edges: Vec<Edge> = g
        .edges()
        .iter()
        .filter(|e| in_b.contains(&e.id))
        .copied()
        .collect();
    let b_graph = WeightedGraph::from_edges(n, b_edges)?;

    let emb = build_embedding_core(g, &out.records, &routing, &in_b)?;
    let mut cert = certificate_report(
        g,
        &b_graph,
        &emb,
        &out.records,
        &routing.settle_level,
        routing.s_set.len(),
        t,
        routing.phi_floor_events,
    )?;
    cert.r_size = out.tree.len();

    Ok(PreconditionerGraph {
        tree: out.tree,
        augmentation: s_only,
        t,
        b_graph,
        embedding: emb,
        certificate: cert,
        records: out.records,
        gremban_cover_mode: false,
        settle_level: routing.settle_level,
    })
}

/// |S| budget from the analysis: 8·ρ²·t².
pub fn s_budget(rho: usize, t: usize) -> usize {
    8 * rho * rho * t * t
}

struct CoverStructure {
    base: WeightedGraph,
    /// Per base edge: cover image ids indexed by the copy of the edge's
    /// first endpoint, and whether the edge crosses copies.
    img: Vec<[EdgeId; 2]>,
    crosses: Vec<bool>,
    base_of: Vec<usize>,
}

fn cover_structure(cover: &WeightedGraph, base_n: usize) -> Result<CoverStructure> {
    if cover.n_vertices() != 2 * base_n {
        return Err(Error::DimensionMismatch { expected: 2 * base_n, got: cover.n_vertices() });
    }
    let mut by_pair: BTreeMap<(usize, usize, bool), Vec<EdgeId>> = BTreeMap::new();
    for e in cover.edges() {
        let (bu, bv) = (e.u % base_n, e.v % base_n);
        if bu == bv {
            return Err(Error::InvalidEmbedding(format!(
                "vertical edge ({}, {}) is not allowed in a Gremban cover",
                e.u, e.v
            )));
        }
        let crosses = (e.u < base_n) != (e.v < base_n);
        by_pair
            .entry((bu.min(bv), bu.max(bv), crosses))
            .or_default()
            .push(e.id);
    }
    let mut base_edges = Vec::new();
    let mut img = Vec::new();
    let mut crosses_v = Vec::new();
    let mut base_of = vec![usize::MAX; cover.n_edges()];
    for ((bu, bv, crosses), ids) in by_pair {
        if ids.len() != 2 {
            return Err(Error::InvalidEmbedding(format!(
                "base pair ({bu},{bv}) has {} images, want 2",
                ids.len()
            )));
        }
        let (w0, w1) = (cover.edges()[ids[0]].w, cover.edges()[ids[1]].w);
        if (w0 - w1).abs() > 1e-12 * w0.abs().max(w1.abs()) {
            return Err(Error::InvalidEmbedding(format!(
                "images of base pair ({bu},{bv}) have unequal weights"
            )));
        }
        // image seen from copy 0 of bu: for same-copy edges both endpoints are
        // below base_n; for crossing edges the image contains the vertex bu itself
        let at_copy0 = |id: EdgeId| {
            let e = &cover.edges()[id];
            if crosses {
                e.u == bu || e.v == bu
            } else {
                e.u < base_n && e.v < base_n
            }
        };
        let (i0, i1) = if at_copy0(ids[0]) { (ids[0], ids[1]) } else { (ids[1], ids[0]) };
        let bid = base_edges.len();
        base_of[i0] = bid;
        base_of[i1] = bid;
        base_edges.push(Edge { u: bu, v: bv, w: w0, id: bid });
        img.push([i0, i1]);
        crosses_v.push(crosses);
    }
    let base = WeightedGraph::from_edges(base_n, base_edges)?;
    Ok(CoverStructure { base, img, crosses: crosses_v, base_of })
}

/// Preconditioner for a connected Gremban cover: the construction runs on the
/// covered (base) graph with all weights positive; R and S are both images of
/// each chosen base edge, plus one bridging edge so R spans the cover.
pub fn precondition_cover(
    cover: &WeightedGraph,
    base_n: usize,
    t: usize,
) -> Result<PreconditionerGraph> {
    if !cover.is_connected() {
        return Err(Error::Disconnected);
    }
    let cs = cover_structure(cover, base_n)?;
    let t_base = t.clamp(1, base_n.max(1));
    let base_pc = precondition(&cs.base, t_base)?;
    let params = base_pc.records.params.clone();

    // images of R ∪ S
    let mut in_b_base = std::collections::BTreeSet::new();
    in_b_base.extend(base_pc.tree.iter().copied());
    in_b_base.extend(base_pc.augmentation.iter().copied());
    let mut r_cover: Vec<EdgeId> = Vec::new();
    for &be in &base_pc.tree {
        r_cover.extend_from_slice(&cs.img[be]);
    }
    let mut s_cover: Vec<EdgeId> = Vec::new();
    for &be in &base_pc.augmentation {
        s_cover.extend_from_slice(&cs.img[be]);
    }

    // the images of a base tree always split into two components; bridge them
    let mut in_b: std::collections::BTreeSet<EdgeId> =
        r_cover.iter().chain(&s_cover).copied().collect();
    {
        let b_edges: Vec<Edge> = cover
            .edges()
            .iter()
            .filter(|e| in_b.contains(&e.id))
            .copied()
            .collect();
        let bg = WeightedGraph::from_edges(cover.n_vertices(), b_edges)?;
        let (comp, count) = bg.components();
        if count > 1 {
            let bridge = cover
                .edges()
                .iter()
                .filter(|e| comp[e.u] != comp[e.v])
                .max_by(|a, b| {
                    a.w.partial_cmp(&b.w)
                        .unwrap()
                        .then(b.id.cmp(&a.id))
                })
                .ok_or(Error::Disconnected)?;
            r_cover.push(bridge.id);
            in_b.insert(bridge.id);
        }
    }

    let b_edges: Vec<Edge> = cover
        .edges()
        .iter()
        .filter(|e| in_b.contains(&e.id))
        .copied()
        .collect();
    let b_graph = WeightedGraph::from_edges(cover.n_vertices(), b_edges)?;
    let (_, lca_b) = crate::generate::any_spanning_tree(&b_graph);

    // lift the base embedding edge by edge
    let mut settle_level = vec![0usize; cover.n_edges()];
    let mut paths = Vec::with_capacity(cover.n_edges());
    for ec in cover.edges() {
        let be = cs.base_of[ec.id];
        let j = base_pc.settle_level.get(be).copied().unwrap_or(1).max(1);
        settle_level[ec.id] = j;
        if in_b.contains(&ec.id) {
            paths.push(EmbeddedPath { edges: vec![ec.id], pi: vec![1.0] });
            continue;
        }
        let bedge = &cs.base.edges()[be];
        let base_path = &base_pc.embedding.paths[be];
        // start the lift at the cover endpoint sitting over the base tail
        let start = if ec.u % base_n == bedge.u { ec.u } else { ec.v };
        let goal = if start == ec.u { ec.v } else { ec.u };
        let mut copy = usize::from(start >= base_n);
        let mut at = bedge.u;
        let mut lifted = Vec::with_capacity(base_path.edges.len());
        for &f in &base_path.edges {
            let fe = &cs.base.edges()[f];
            let id = if at == fe.u {
                cs.img[f][copy]
            } else {
                cs.img[f][copy ^ usize::from(cs.crosses[f])]
            };
            lifted.push(id);
            if cs.crosses[f] {
                copy ^= 1;
            }
            at = fe.other(at);
        }
        let end_vertex = at + copy * base_n;
        if end_vertex == goal {
            let mut pi = base_path.pi.clone();
            if start != ec.u {
                // validation walks from ec.u; orient the path accordingly
                lifted.reverse();
                pi.reverse();
            }
            paths.push(EmbeddedPath { edges: lifted, pi });
        } else {
            // copy-parity mismatch: route over the spanning tree of B instead
            let ids = lca_b
                .path_edges(ec.u, ec.v)
                .ok_or_else(|| Error::InvalidEmbedding("cover B not spanning".into()))?;
            let pi = ids
                .iter()
                .map(|&id| params.tau(j, base_pc.records.eindex[cs.base_of[id]]))
                .collect();
            paths.push(EmbeddedPath { edges: ids, pi });
        }
    }
    let emb = WeightedEmbedding { paths };
    let s_set_size = s_cover.len();
    let mut cert = certificate_report(
        cover,
        &b_graph,
        &emb,
        &base_pc.records,
        &settle_level,
        s_set_size,
        t_base,
        base_pc.certificate.phi_floor_events,
    )?;
    cert.r_size = r_cover.len();

    let r_set: std::collections::BTreeSet<EdgeId> = r_cover.iter().copied().collect();
    let s_only: Vec<EdgeId> = s_cover.into_iter().filter(|id| !r_set.contains(id)).collect();
    Ok(PreconditionerGraph {
        tree: r_cover,
        augmentation: s_only,
        t: t_base,
        b_graph,
        embedding: emb,
        certificate: cert,
        records: base_pc.records,
        gremban_cover_mode: true,
        settle_level,
    })
}
