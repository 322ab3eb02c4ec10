//! Lowest-common-ancestor queries over a rooted forest via Euler tour and a
//! sparse table (O(n log n) build, O(1) query), plus tree-path extraction.

/// LCA index over a forest given by adjacency lists of (neighbor, edge index).
/// Roots are the lowest-id vertex of each tree.
#[derive(Debug, Clone)]
pub struct LcaIndex {
    parent: Vec<Option<usize>>,
    /// Edge index (into the caller's edge list) connecting each vertex to its parent.
    parent_edge: Vec<Option<usize>>,
    depth: Vec<u32>,
    root_of: Vec<usize>,
    /// Euler tour of vertices and first occurrence per vertex.
    first: Vec<usize>,
    /// sparse[k][i] = euler position of the min-depth vertex in [i, i + 2^k).
    sparse: Vec<Vec<u32>>,
    euler: Vec<u32>,
}

impl LcaIndex {
    pub fn build(n: usize, adj: &[Vec<(usize, usize)>]) -> Self {
        let mut parent = vec![None; n];
        let mut parent_edge = vec![None; n];
        let mut depth = vec![0u32; n];
        let mut root_of = vec![usize::MAX; n];
        let mut euler: Vec<u32> = Vec::with_capacity(2 * n);
        let mut first = vec![usize::MAX; n];

        let mut visited = vec![false; n];
        for root in 0..n {
            if visited[root] {
                continue;
            }
            // iterative DFS with re-entry markers for the Euler tour
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            visited[root] = true;
            root_of[root] = root;
            while let Some(&mut (u, ref mut child_pos)) = stack.last_mut() {
                if *child_pos == 0 {
                    first[u] = euler.len();
                    euler.push(u as u32);
                }
                let mut advanced = false;
                while *child_pos < adj[u].len() {
                    let (v, eidx) = adj[u][*child_pos];
                    *child_pos += 1;
                    if !visited[v] {
                        visited[v] = true;
                        parent[v] = Some(u);
                        parent_edge[v] = Some(eidx);
                        depth[v] = depth[u] + 1;
                        root_of[v] = root_of[u];
                        stack.push((v, 0));
                        advanced = true;
                        break;
                    }
                }
                if !advanced {
                    stack.pop();
                    if let Some(&(p, _)) = stack.last() {
                        euler.push(p as u32);
                    }
                }
            }
        }

        // sparse table of argmin-by-depth over the euler tour
        let m = euler.len().max(1);
        let levels = (usize::BITS - m.leading_zeros()) as usize;
        let mut sparse: Vec<Vec<u32>> = Vec::with_capacity(levels);
        sparse.push((0..euler.len() as u32).collect());
        let key = |pos: u32| depth[euler[pos as usize] as usize];
        for k in 1..levels {
            let half = 1usize << (k - 1);
            let prev = &sparse[k - 1];
            let len = prev.len().saturating_sub(half);
            let mut row = Vec::with_capacity(len);
            for i in 0..len {
                let a = prev[i];
                let b = prev[i + half];
                row.push(if key(a) <= key(b) { a } else { b });
            }
            sparse.push(row);
        }

        LcaIndex { parent, parent_edge, depth, root_of, first, sparse, euler }
    }

    pub fn depth(&self, v: usize) -> u32 {
        self.depth[v]
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parent_edge(&self, v: usize) -> Option<usize> {
        self.parent_edge[v]
    }

    pub fn same_tree(&self, u: usize, v: usize) -> bool {
        self.root_of[u] == self.root_of[v]
    }

    /// Lowest common ancestor, or `None` when `u` and `v` are in different trees.
    pub fn lca(&self, u: usize, v: usize) -> Option<usize> {
        if !self.same_tree(u, v) {
            return None;
        }
        if u == v {
            return Some(u);
        }
        let (mut a, mut b) = (self.first[u], self.first[v]);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        let len = b - a + 1;
        let k = (usize::BITS - 1 - len.leading_zeros()) as usize;
        let i1 = self.sparse[k][a];
        let i2 = self.sparse[k][b + 1 - (1 << k)];
        let key = |pos: u32| self.depth[self.euler[pos as usize] as usize];
        let pos = if key(i1) <= key(i2) { i1 } else { i2 };
        Some(self.euler[pos as usize] as usize)
    }

    /// Edge indices along the tree path from `u` to `v` (in order), or `None`
    /// when they are in different trees.
    pub fn path_edges(&self, u: usize, v: usize) -> Option<Vec<usize>> {
        let w = self.lca(u, v)?;
        let mut up = Vec::new();
        let mut x = u;
        while x != w {
            up.push(self.parent_edge[x].expect("non-root has parent edge"));
            x = self.parent[x].expect("non-root has parent");
        }
        let mut down = Vec::new();
        let mut y = v;
        while y != w {
            down.push(self.parent_edge[y].expect("non-root has parent edge"));
            y = self.parent[y].expect("non-root has parent");
        }
        down.reverse();
        up.extend(down);
        Some(up)
    }

    /// Vertices along the tree path from `u` to `v`, inclusive.
    pub fn path_vertices(&self, u: usize, v: usize) -> Option<Vec<usize>> {
        let w = self.lca(u, v)?;
        let mut up = Vec::new();
        let mut x = u;
        while x != w {
            up.push(x);
            x = self.parent[x].unwrap();
        }
        up.push(w);
        let mut down = Vec::new();
        let mut y = v;
        while y != w {
            down.push(y);
            y = self.parent[y].unwrap();
        }
        down.reverse();
        up.extend(down);
        Some(up)
    }
}
