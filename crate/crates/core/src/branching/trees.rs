//! Unlabelled trees on few vertices, their automorphism counts, and the tree
//! integrals `t_isol`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::{marginal, StepKernel};

/// Largest tree order handled by [`trees`].
pub const MAX_TREE_ORDER: usize = 8;

/// A tree on `0..k` with its automorphism count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelledTree {
    k: usize,
    edges: Vec<(usize, usize)>,
    aut: u64,
}

impl LabelledTree {
    /// Checks that `edges` form a tree on `0..k` and counts automorphisms by
    /// trying every permutation (so `k` is limited to [`MAX_TREE_ORDER`]).
    pub fn new(k: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if k == 0 || k > MAX_TREE_ORDER {
            return Err(Error::BudgetExceeded(format!("tree order {k} outside 1..={MAX_TREE_ORDER}")));
        }
        if edges.len() != k - 1 {
            return Err(Error::InvalidGraph(format!("{} edges on {k} vertices is not a tree", edges.len())));
        }
        let mut uf = crate::components::UnionFind::new(k);
        for &(u, v) in &edges {
            if u >= k || v >= k || u == v || !uf.union(u, v) {
                return Err(Error::InvalidGraph(format!("edge ({u},{v}) breaks the tree")));
            }
        }
        let edges: Vec<(usize, usize)> = edges.into_iter().map(|(u, v)| (u.min(v), u.max(v))).collect();
        let aut = count_automorphisms(k, &edges);
        Ok(Self { k, edges, aut })
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn aut(&self) -> u64 {
        self.aut
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.k];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }
}

fn count_automorphisms(k: usize, edges: &[(usize, usize)]) -> u64 {
    let mut adj = vec![false; k * k];
    for &(u, v) in edges {
        adj[u * k + v] = true;
        adj[v * k + u] = true;
    }
    let preserves = |p: &[usize]| edges.iter().all(|&(u, v)| adj[p[u] * k + p[v]]);
    let mut perm: Vec<usize> = (0..k).collect();
    let mut count = preserves(&perm) as u64;
    let mut c = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            count += preserves(&perm) as u64;
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    count
}

fn prufer_decode(seq: &[usize], k: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; k];
    for &x in seq {
        degree[x] += 1;
    }
    let mut edges = Vec::with_capacity(k - 1);
    for &x in seq {
        let leaf = (0..k).find(|&v| degree[v] == 1).unwrap();
        edges.push((leaf, x));
        degree[leaf] -= 1;
        degree[x] -= 1;
    }
    let rest: Vec<usize> = (0..k).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

fn rooted_code(adj: &[Vec<usize>], v: usize, parent: usize) -> String {
    let mut kids: Vec<String> = adj[v].iter().filter(|&&w| w != parent).map(|&w| rooted_code(adj, w, v)).collect();
    kids.sort();
    format!("({})", kids.concat())
}

/// Canonical string of an unrooted tree: smallest rooted code over its
/// centers.
fn canonical_code(k: usize, edges: &[(usize, usize)]) -> String {
    let mut adj = vec![Vec::new(); k];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut layer: Vec<usize> = (0..k).filter(|&v| degree[v] <= 1).collect();
    let mut remaining = k;
    while remaining > 2 {
        remaining -= layer.len();
        for &leaf in &layer {
            degree[leaf] = 0;
        }
        let mut next = Vec::new();
        for &leaf in &layer {
            for &w in &adj[leaf] {
                if degree[w] == 0 {
                    continue;
                }
                degree[w] -= 1;
                if degree[w] == 1 {
                    next.push(w);
                }
            }
        }
        layer = next;
    }
    layer.iter().map(|&c| rooted_code(&adj, c, usize::MAX)).min().unwrap()
}

/// One representative per isomorphism class of trees on `k` vertices.
pub fn trees(k: usize) -> Result<Vec<LabelledTree>> {
    if k == 0 || k > MAX_TREE_ORDER {
        return Err(Error::BudgetExceeded(format!("tree order {k} outside 1..={MAX_TREE_ORDER}")));
    }
    if k <= 2 {
        let edges = if k == 2 { vec![(0, 1)] } else { vec![] };
        return Ok(vec![LabelledTree::new(k, edges)?]);
    }
    let mut classes: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    let len = k - 2;
    let total = k.pow(len as u32);
    let mut seq = vec![0usize; len];
    for code in 0..total {
        let mut c = code;
        for s in seq.iter_mut() {
            *s = c % k;
            c /= k;
        }
        let edges = prufer_decode(&seq, k);
        classes.entry(canonical_code(k, &edges)).or_insert(edges);
    }
    classes.into_values().map(|e| LabelledTree::new(k, e)).collect()
}

/// `t_isol(T, k)`: the sum over type assignments `x` of
/// `prod_{uv in E(T)} k(x_u, x_v) * prod_v mu(x_v) exp(-lambda(x_v))`.
///
/// Evaluated by passing messages towards vertex 0: the message of a subtree
/// rooted at `c` to a parent of type `a` is
/// `sum_b k(a, b) w(b) prod_{children d of c} msg_d(b)` with
/// `w(b) = mu_b exp(-lambda_b)`, so the cost is O(|T| m^2).
pub fn t_isol(tree: &LabelledTree, k: &StepKernel) -> f64 {
    let m = k.num_types();
    let lambda = marginal(k);
    let w: Vec<f64> = k.masses().iter().zip(lambda.values()).map(|(mu, l)| mu * (-l).exp()).collect();
    let adj = tree.adjacency();

    // post-order from root 0
    let mut order = Vec::with_capacity(tree.k);
    let mut parent = vec![usize::MAX; tree.k];
    let mut stack = vec![0usize];
    let mut seen = vec![false; tree.k];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        order.push(v);
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                parent[u] = v;
                stack.push(u);
            }
        }
    }
    // inside[v][b] = w(b) * prod over children of their messages at type b
    let mut inside = vec![vec![0.0; m]; tree.k];
    for &v in order.iter().rev() {
        let mut acc = w.clone();
        for &c in &adj[v] {
            if c == parent[v] {
                continue;
            }
            for (a, slot) in acc.iter_mut().enumerate() {
                let msg: f64 = (0..m).map(|b| k.value(a, b) * inside[c][b]).sum();
                *slot *= msg;
            }
        }
        inside[v] = acc;
    }
    inside[0].iter().sum()
}

#[cfg(test)]
pub(crate) fn t_isol_brute(tree: &LabelledTree, k: &StepKernel) -> f64 {
    let m = k.num_types();
    let lambda = marginal(k);
    let r = tree.order();
    let mut total = 0.0;
    for code in 0..m.pow(r as u32) {
        let mut x = vec![0usize; r];
        let mut c = code;
        for s in x.iter_mut() {
            *s = c % m;
            c /= m;
        }
        let mut term = 1.0;
        for &(u, v) in tree.edges() {
            term *= k.value(x[u], x[v]);
        }
        for &t in &x {
            term *= k.masses()[t] * (-lambda.values()[t]).exp();
        }
        total += term;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_counts() {
        let counts: Vec<usize> = (1..=8).map(|k| trees(k).unwrap().len()).collect();
        assert_eq!(counts, vec![1, 1, 1, 2, 3, 6, 11, 23]);
        assert!(trees(9).is_err());
        assert!(trees(0).is_err());
    }

    #[test]
    fn cayley_via_automorphisms() {
        // sum over classes of k!/aut(T) counts labelled trees: k^(k-2)
        for k in 1..=8usize {
            let fact: u64 = (1..=k as u64).product();
            let labelled: u64 = trees(k).unwrap().iter().map(|t| fact / t.aut()).sum();
            assert_eq!(labelled, (k as u64).pow(k.saturating_sub(2) as u32), "k = {k}");
        }
    }

    #[test]
    fn automorphisms_of_small_trees() {
        assert_eq!(LabelledTree::new(3, vec![(0, 1), (1, 2)]).unwrap().aut(), 2);
        assert_eq!(LabelledTree::new(4, vec![(0, 1), (0, 2), (0, 3)]).unwrap().aut(), 6);
        assert_eq!(LabelledTree::new(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap().aut(), 2);
        assert!(LabelledTree::new(3, vec![(0, 1), (0, 1)]).is_err());
        assert!(LabelledTree::new(3, vec![(0, 1)]).is_err());
    }

    #[test]
    fn t_isol_examples() {
        let edge = LabelledTree::new(2, vec![(0, 1)]).unwrap();
        let c = StepKernel::constant(1.0).unwrap();
        assert!((t_isol(&edge, &c) - (-2.0f64).exp()).abs() < 1e-15);
        let c3 = StepKernel::constant(3.0).unwrap();
        assert!((t_isol(&edge, &c3) - 3.0 * (-6.0f64).exp()).abs() < 1e-15);
        let single = LabelledTree::new(1, vec![]).unwrap();
        assert!((t_isol(&single, &c) - (-1.0f64).exp()).abs() < 1e-15);
        let zero = StepKernel::uniform(vec![vec![0.0; 3]; 3]).unwrap();
        for t in trees(5).unwrap() {
            assert_eq!(t_isol(&t, &zero), 0.0);
        }
    }

    #[test]
    fn dp_matches_brute_force() {
        let k = StepKernel::new(
            vec![0.2, 0.3, 0.5],
            vec![vec![1.0, 0.5, 2.0], vec![0.5, 0.0, 1.5], vec![2.0, 1.5, 0.25]],
        )
        .unwrap();
        for order in 1..=5 {
            for t in trees(order).unwrap() {
                let (a, b) = (t_isol(&t, &k), t_isol_brute(&t, &k));
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} vs {b}");
            }
        }
    }
}
