//! Component statistics and the perturbation / tail-bound harnesses.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graphgen::SparseGraph;
use crate::rng::{map_replicas, RngStream, StreamRng};

/// Disjoint sets with union by size and path compression.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns false if `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ComponentStats {
    pub n: usize,
    /// Order of the largest component.
    pub c1: usize,
    /// Order of the second largest component (0 if there is only one).
    pub c2: usize,
    /// Component order `k` -> number of vertices in components of order `k`.
    pub nk: BTreeMap<usize, usize>,
    /// Same, restricted to tree components.
    pub nk_tree: BTreeMap<usize, usize>,
    /// Same, restricted to components containing a cycle.
    pub nk_cyc: BTreeMap<usize, usize>,
    pub components: usize,
}

impl ComponentStats {
    pub fn n_k(&self, k: usize) -> usize {
        self.nk.get(&k).copied().unwrap_or(0)
    }
}

/// Components of the underlying simple graph. Parallel edges count once in
/// the tree test.
pub fn analyze(g: &SparseGraph) -> ComponentStats {
    let n = g.n();
    let mut uf = UnionFind::new(n);
    for &(u, v) in g.edges() {
        uf.union(u, v);
    }
    let mut edge_count = vec![0usize; n];
    let mut prev = None;
    // edges are sorted, so repeated pairs are adjacent
    for &e in g.edges() {
        if prev == Some(e) {
            continue;
        }
        prev = Some(e);
        edge_count[uf.find(e.0)] += 1;
    }
    let mut stats = ComponentStats { n, ..Default::default() };
    let mut orders = Vec::new();
    for v in 0..n {
        if uf.find(v) != v {
            continue;
        }
        let k = uf.size[v];
        orders.push(k);
        *stats.nk.entry(k).or_default() += k;
        let bucket = if edge_count[v] == k - 1 { &mut stats.nk_tree } else { &mut stats.nk_cyc };
        *bucket.entry(k).or_default() += k;
    }
    orders.sort_unstable_by(|a, b| b.cmp(a));
    stats.components = orders.len();
    stats.c1 = orders.first().copied().unwrap_or(0);
    stats.c2 = orders.get(1).copied().unwrap_or(0);
    stats
}

/// `N_{>= omega}`: vertices in components of order at least `omega`.
pub fn n_at_least(stats: &ComponentStats, omega: usize) -> usize {
    stats.nk.range(omega.max(1)..).map(|(_, v)| v).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbMode {
    Random,
    /// Deletes highest-degree vertices, then edges of a spanning tree of the
    /// largest component (breadth-first from its highest-degree vertex).
    /// A cheap attack, not an optimal one.
    AdversarialGreedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub graph: SparseGraph,
    /// `new_label[v]` for surviving original vertices, `None` if deleted.
    pub new_label: Vec<Option<usize>>,
    pub deleted_vertices: usize,
    pub deleted_edges: usize,
    pub added_edges: usize,
}

impl Perturbation {
    /// True when fewer edges were deleted or added than requested.
    pub fn shortfall(&self, del_edges: usize, add_edges: usize) -> bool {
        self.deleted_edges < del_edges || self.added_edges < add_edges
    }
}

/// Deletes `del_vertices` vertices (relabeling the rest in order), then
/// deletes `del_edges` edges and adds `add_edges` uniformly random new pairs.
/// Edge requests beyond what is available are clipped and visible in the
/// returned counts.
pub fn perturb<R: Rng + ?Sized>(
    g: &SparseGraph,
    del_vertices: usize,
    del_edges: usize,
    add_edges: usize,
    mode: PerturbMode,
    rng: &mut R,
) -> Result<Perturbation> {
    let n = g.n();
    if del_vertices > n {
        return Err(Error::InvalidArgument(format!("cannot delete {del_vertices} of {n} vertices")));
    }
    let doomed: Vec<usize> = match mode {
        PerturbMode::Random => index::sample(rng, n, del_vertices).into_vec(),
        PerturbMode::AdversarialGreedy => {
            let deg = g.degrees();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| deg[b].cmp(&deg[a]).then(a.cmp(&b)));
            order.truncate(del_vertices);
            order
        }
    };
    let mut alive = vec![true; n];
    for v in doomed {
        alive[v] = false;
    }
    let mut new_label = vec![None; n];
    let mut next = 0;
    for v in 0..n {
        if alive[v] {
            new_label[v] = Some(next);
            next += 1;
        }
    }
    let n2 = next;
    let mut edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .filter_map(|&(u, v)| Some((new_label[u]?, new_label[v]?)))
        .collect();

    let deleted_edges = del_edges.min(edges.len());
    match mode {
        PerturbMode::Random => {
            let drop = index::sample(rng, edges.len(), deleted_edges);
            let mut keep = vec![true; edges.len()];
            for i in drop {
                keep[i] = false;
            }
            let mut it = keep.iter();
            edges.retain(|_| *it.next().unwrap());
        }
        PerturbMode::AdversarialGreedy => {
            let order = attack_order(n2, &edges);
            let mut keep = vec![true; edges.len()];
            for &i in order.iter().take(deleted_edges) {
                keep[i] = false;
            }
            let mut it = keep.iter();
            edges.retain(|_| *it.next().unwrap());
        }
    }

    let mut added = 0;
    if n2 >= 2 && add_edges > 0 {
        let mut present: std::collections::HashSet<(usize, usize)> = edges.iter().copied().collect();
        let capacity = if g.is_multigraph() { usize::MAX } else { n2 * (n2 - 1) / 2 - present.len() };
        let target = add_edges.min(capacity);
        while added < target {
            let u = rng.random_range(0..n2);
            let v = rng.random_range(0..n2);
            if u == v {
                continue;
            }
            let e = (u.min(v), u.max(v));
            if g.is_multigraph() || present.insert(e) {
                edges.push(e);
                added += 1;
            }
        }
    }
    Ok(Perturbation {
        graph: SparseGraph::from_canonical(n2, edges, g.is_multigraph()),
        new_label,
        deleted_vertices: del_vertices,
        deleted_edges,
        added_edges: added,
    })
}

/// Edge indices ordered for deletion: spanning-tree edges of the largest
/// component first (breadth-first order from its highest-degree vertex), then
/// the remaining edges in input order.
fn attack_order(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    if edges.is_empty() {
        return vec![];
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, &(u, v)) in edges.iter().enumerate() {
        adj[u].push((v, i));
        adj[v].push((u, i));
    }
    let mut uf = UnionFind::new(n);
    for &(u, v) in edges {
        uf.union(u, v);
    }
    let big = (0..n).max_by_key(|&v| (uf.set_size(v), std::cmp::Reverse(v))).unwrap();
    let root_set = uf.find(big);
    let start = (0..n)
        .filter(|&v| uf.find(v) == root_set)
        .max_by_key(|&v| (adj[v].len(), std::cmp::Reverse(v)))
        .unwrap();
    let mut seen = vec![false; n];
    let mut used = vec![false; edges.len()];
    let mut order = Vec::new();
    let mut queue = std::collections::VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for &(v, i) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                used[i] = true;
                order.push(i);
                queue.push_back(v);
            }
        }
    }
    order.extend((0..edges.len()).filter(|&i| !used[i]));
    order
}

/// Relabels vertices by `perm` (vertex `v` becomes `perm[v]`).
pub fn relabel(g: &SparseGraph, perm: &[usize]) -> Result<SparseGraph> {
    let edges = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
    SparseGraph::new(g.n(), edges, g.is_multigraph())
}

/// Shuffled relabeling, handy for equivariance checks.
pub fn random_relabel<R: Rng + ?Sized>(g: &SparseGraph, rng: &mut R) -> SparseGraph {
    let mut perm: Vec<usize> = (0..g.n()).collect();
    perm.shuffle(rng);
    relabel(g, &perm).expect("a permutation preserves validity")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFrequencies {
    pub reps: usize,
    /// Fraction of samples with `C1 < lo n`.
    pub c1_below: f64,
    /// Fraction of samples with `C1 > hi n`.
    pub c1_above: f64,
    /// Fraction of samples with `C2 >= lo n`.
    pub c2_at_least: f64,
}

/// Empirical tail frequencies of `C1` and `C2` over `reps` independent
/// samples; replica `i` uses stream `root.child(i)`.
pub fn ensemble_tail<F>(sampler: F, reps: usize, lo: f64, hi: f64, root: RngStream) -> Result<TailFrequencies>
where
    F: Fn(&mut StreamRng) -> Result<SparseGraph> + Sync,
{
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    let flags = map_replicas(root, reps, |_, rng| -> Result<[bool; 3]> {
        let g = sampler(rng)?;
        let s = analyze(&g);
        let n = g.n() as f64;
        Ok([(s.c1 as f64) < lo * n, s.c1 as f64 > hi * n, s.c2 as f64 >= lo * n])
    });
    let mut counts = [0usize; 3];
    for f in flags {
        let f = f?;
        for (c, b) in counts.iter_mut().zip(f) {
            *c += b as usize;
        }
    }
    let r = reps as f64;
    Ok(TailFrequencies {
        reps,
        c1_below: counts[0] as f64 / r,
        c1_above: counts[1] as f64 / r,
        c2_at_least: counts[2] as f64 / r,
    })
}
