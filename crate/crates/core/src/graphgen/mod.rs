//! Random graph samplers, model conversion, iid type sampling, polarity
//! graphs and bond percolation.

pub(crate) mod blocks;
mod polarity;

pub use polarity::{is_prime, polarity_graph, polarity_points};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;

use crate::error::{Error, Result};
use crate::kernel::{Entries, StepKernel, WeightMatrix};
use blocks::{block_for, type_multisets};

/// Simple graph or multigraph on `0..n`. Loops are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    multigraph: bool,
}

impl SparseGraph {
    /// Validates and canonicalizes: each pair is stored as `(u, v)` with
    /// `u < v`, and edges are sorted. Simple graphs may not repeat a pair.
    pub fn new(n: usize, edges: Vec<(usize, usize)>, multigraph: bool) -> Result<Self> {
        let mut edges = edges;
        for e in edges.iter_mut() {
            let (u, v) = *e;
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!("edge ({u},{v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("loop at vertex {u}")));
            }
            *e = (u.min(v), u.max(v));
        }
        edges.sort_unstable();
        if !multigraph {
            if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidGraph(format!("repeated edge {:?} in a simple graph", w[0])));
            }
        }
        Ok(Self { n, edges, multigraph })
    }

    pub fn empty(n: usize) -> Self {
        Self { n, edges: Vec::new(), multigraph: false }
    }

    /// Callers guarantee canonical, in-range, loop-free edges.
    pub(crate) fn from_canonical(n: usize, mut edges: Vec<(usize, usize)>, multigraph: bool) -> Self {
        debug_assert!(edges.iter().all(|&(u, v)| u < v && v < n));
        edges.sort_unstable();
        if !multigraph {
            debug_assert!(edges.windows(2).all(|w| w[0] != w[1]));
        }
        Self { n, edges, multigraph }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_multigraph(&self) -> bool {
        self.multigraph
    }

    /// The underlying simple graph.
    pub fn simplified(&self) -> SparseGraph {
        let mut edges = self.edges.clone();
        edges.dedup();
        SparseGraph { n: self.n, edges, multigraph: false }
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }
}

/// How a weight `a` on an `n`-vertex matrix turns into an edge law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeModel {
    /// Present with probability `min(a/n, 1)`.
    Bernoulli,
    /// Present with probability `1 - exp(-a/n)`.
    PoissonSimple,
    /// `Poisson(a/n)` parallel copies.
    PoissonMulti,
}

impl EdgeModel {
    /// Probability that at least one copy of the pair is present.
    pub fn presence(self, a: f64, n: usize) -> f64 {
        let x = a / n as f64;
        match self {
            EdgeModel::Bernoulli => x.min(1.0),
            EdgeModel::PoissonSimple | EdgeModel::PoissonMulti => -(-x).exp_m1(),
        }
    }
}

/// `Poisson(lambda)` conditioned on being at least 1.
pub(crate) fn zero_truncated_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda > 1.0 {
        let pois = Poisson::new(lambda).expect("positive rate");
        loop {
            let k = pois.sample(rng) as u64;
            if k >= 1 {
                return k;
            }
        }
    }
    // inversion over k = 1, 2, ...
    let mut u: f64 = rng.random::<f64>() * -(-lambda).exp_m1();
    let mut term = lambda * (-lambda).exp();
    let mut k = 1u64;
    while u > term && term > 0.0 {
        u -= term;
        k += 1;
        term *= lambda / k as f64;
    }
    k
}

/// Samples a graph from `a` under the given edge law. Diagonal entries are
/// ignored.
pub fn sample_graph<R: Rng + ?Sized>(a: &WeightMatrix, model: EdgeModel, rng: &mut R) -> Result<SparseGraph> {
    let n = a.n();
    let multi = model == EdgeModel::PoissonMulti;
    let mut edges = Vec::new();
    let mut push = |u: usize, v: usize, weight: f64, rng: &mut R| {
        if multi {
            let copies = zero_truncated_poisson(weight / n as f64, rng);
            for _ in 0..copies {
                edges.push((u, v));
            }
        } else {
            edges.push((u, v));
        }
    };
    match a.entries() {
        Entries::Dense(_) => {
            for u in 0..n {
                for v in u + 1..n {
                    let w = a.get(u, v);
                    if w > 0.0 && rng.random::<f64>() < model.presence(w, n) {
                        push(u, v, w, rng);
                    }
                }
            }
        }
        Entries::Sparse(map) => {
            for (&(u, v), &w) in map {
                if u != v && w > 0.0 && rng.random::<f64>() < model.presence(w, n) {
                    push(u, v, w, rng);
                }
            }
        }
        Entries::Typed { types, m, values } => {
            let mut groups = vec![Vec::new(); *m];
            for (v, &t) in types.iter().enumerate() {
                groups[t].push(v);
            }
            let mut hits = Vec::new();
            for tuple in type_multisets(*m, 2) {
                let w = values[tuple[0] * m + tuple[1]];
                let block = block_for(&groups, &tuple);
                hits.clear();
                block.sample(model.presence(w, n), rng, |t| hits.push((t[0], t[1])))?;
                for &(u, v) in &hits {
                    push(u, v, w, rng);
                }
            }
        }
    }
    Ok(SparseGraph::from_canonical(n, edges, multi))
}

/// `G(A)`: pair `ij` present independently with probability `min(a_ij/n, 1)`.
pub fn sample_bernoulli<R: Rng + ?Sized>(a: &WeightMatrix, rng: &mut R) -> Result<SparseGraph> {
    sample_graph(a, EdgeModel::Bernoulli, rng)
}

/// Pair `ij` present independently with probability `1 - exp(-a_ij/n)`.
pub fn sample_poisson_simple<R: Rng + ?Sized>(a: &WeightMatrix, rng: &mut R) -> Result<SparseGraph> {
    sample_graph(a, EdgeModel::PoissonSimple, rng)
}

/// Poisson multigraph: `Poisson(a_ij/n)` copies of each pair.
pub fn sample_poisson_multi<R: Rng + ?Sized>(a: &WeightMatrix, rng: &mut R) -> Result<SparseGraph> {
    sample_graph(a, EdgeModel::PoissonMulti, rng)
}

/// `a'_ij = -n ln(1 - a_ij/n)`, so that the Poisson simple model on `a'`
/// has the same law as the Bernoulli model on `a`.
pub fn convert_matrix(a: &WeightMatrix) -> Result<WeightMatrix> {
    let n = a.n();
    let nf = n as f64;
    let check = |i: usize, j: usize, value: f64| {
        if value >= nf {
            Err(Error::ConversionUndefined { i, j, value, n })
        } else {
            Ok(())
        }
    };
    match a.entries() {
        Entries::Dense(_) => {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        check(i, j, a.get(i, j))?;
                    }
                }
            }
        }
        Entries::Sparse(map) => {
            for (&(i, j), &v) in map {
                if i != j {
                    check(i, j, v)?;
                }
            }
        }
        Entries::Typed { types, m, values } => {
            let counts = crate::kernel::type_counts(types, *m);
            for s in 0..*m {
                for t in 0..*m {
                    let occurs = if s == t { counts[s] >= 2 } else { counts[s] > 0 && counts[t] > 0 };
                    if occurs {
                        let i = types.iter().position(|&x| x == s).unwrap();
                        let j = types.iter().rposition(|&x| x == t).unwrap();
                        check(i, j, values[s * m + t])?;
                    }
                }
            }
        }
    }
    // entries that never reach the sampler (diagonal, absent type pairs) may
    // be >= n; they map to 0
    Ok(a.map_entries(|x| if x < nf { -nf * (-x / nf).ln_1p() } else { 0.0 }))
}

/// Draws `n` iid types from the kernel's masses; `a_ij = k(t_i, t_j)` for
/// `i != j` and `a_ii = 0`.
pub fn sample_iid_types<R: Rng + ?Sized>(k: &StepKernel, n: usize, rng: &mut R) -> Result<WeightMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let dist = WeightedIndex::new(k.masses()).map_err(|e| Error::InvalidKernel(e.to_string()))?;
    let types = (0..n).map(|_| dist.sample(rng)).collect();
    WeightMatrix::typed(types, k)
}

/// Keeps each edge independently with probability `keep`.
pub fn percolate<R: Rng + ?Sized>(g: &SparseGraph, keep: f64, rng: &mut R) -> Result<SparseGraph> {
    if !(0.0..=1.0).contains(&keep) {
        return Err(Error::InvalidArgument(format!("keep probability {keep} not in [0, 1]")));
    }
    let edges = g.edges.iter().copied().filter(|_| rng.random::<f64>() < keep).collect();
    Ok(SparseGraph { n: g.n, edges, multigraph: g.multigraph })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn graph_validation() {
        assert!(SparseGraph::new(3, vec![(0, 3)], false).is_err());
        assert!(SparseGraph::new(3, vec![(1, 1)], false).is_err());
        assert!(SparseGraph::new(3, vec![(0, 1), (1, 0)], false).is_err());
        let g = SparseGraph::new(3, vec![(2, 1), (1, 0), (0, 1)], true).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 1), (1, 2)]);
        assert_eq!(g.simplified().edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn zero_matrix_gives_empty_graph() {
        let mut rng = RngStream::new(0, 0).rng();
        for a in [
            WeightMatrix::constant(50, 0.0).unwrap(),
            WeightMatrix::dense(vec![vec![0.0; 5]; 5]).unwrap(),
            WeightMatrix::from_triples(5, []).unwrap(),
        ] {
            for model in [EdgeModel::Bernoulli, EdgeModel::PoissonSimple, EdgeModel::PoissonMulti] {
                assert_eq!(sample_graph(&a, model, &mut rng).unwrap().num_edges(), 0);
            }
        }
    }

    #[test]
    fn saturated_matrix_gives_complete_graph() {
        let mut rng = RngStream::new(0, 0).rng();
        let n = 30;
        let a = WeightMatrix::constant(n, n as f64).unwrap();
        assert_eq!(sample_bernoulli(&a, &mut rng).unwrap().num_edges(), n * (n - 1) / 2);
        let d = WeightMatrix::dense(vec![vec![0.0, 9.0, 4.0], vec![9.0, 0.0, 3.0], vec![4.0, 3.0, 0.0]]).unwrap();
        assert_eq!(sample_bernoulli(&d, &mut rng).unwrap().num_edges(), 3);
    }

    #[test]
    fn constant_matrix_edge_count() {
        let mut rng = RngStream::new(11, 0).rng();
        let (n, c) = (10_000usize, 2.0);
        let a = WeightMatrix::constant(n, c).unwrap();
        let pairs = (n * (n - 1) / 2) as f64;
        let p = c / n as f64;
        let reps = 20;
        let total: usize = (0..reps).map(|_| sample_bernoulli(&a, &mut rng).unwrap().num_edges()).sum();
        let mean = total as f64 / reps as f64;
        let sd = (pairs * p * (1.0 - p) / reps as f64).sqrt();
        assert!((mean - 9999.0).abs() < 3.0 * sd, "mean {mean}");
    }

    #[test]
    fn poisson_half_probability() {
        let mut rng = RngStream::new(12, 0).rng();
        let n = 200;
        let a = WeightMatrix::constant(n, n as f64 * std::f64::consts::LN_2).unwrap();
        let pairs = (n * (n - 1) / 2) as f64;
        let count = sample_poisson_simple(&a, &mut rng).unwrap().num_edges() as f64;
        assert!((count - pairs / 2.0).abs() < 4.0 * (pairs / 4.0).sqrt());
    }

    #[test]
    fn huge_entry_always_present() {
        let mut rng = RngStream::new(13, 0).rng();
        let a = WeightMatrix::from_triples(4, [(1, 2, 1e6)]).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_poisson_simple(&a, &mut rng).unwrap().edges(), &[(1, 2)]);
        }
    }

    #[test]
    fn multigraph_mean_multiplicity() {
        let mut rng = RngStream::new(14, 0).rng();
        let a = WeightMatrix::from_triples(2, [(0, 1, 3.0)]).unwrap();
        let reps = 200_000;
        let total: usize = (0..reps).map(|_| sample_poisson_multi(&a, &mut rng).unwrap().num_edges()).sum();
        let mean = total as f64 / reps as f64;
        let sd = (1.5f64 / reps as f64).sqrt();
        assert!((mean - 1.5).abs() < 4.0 * sd, "{mean}");
    }

    #[test]
    fn zero_truncated_poisson_mean() {
        let mut rng = RngStream::new(15, 0).rng();
        for lambda in [0.01, 0.5, 2.0, 10.0] {
            let reps = 100_000;
            let xs: Vec<f64> = (0..reps).map(|_| zero_truncated_poisson(lambda, &mut rng) as f64).collect();
            assert!(xs.iter().all(|&x| x >= 1.0));
            let mean = xs.iter().sum::<f64>() / reps as f64;
            let expected = lambda / -(-lambda).exp_m1();
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / reps as f64;
            assert!((mean - expected).abs() < 5.0 * (var / reps as f64).sqrt() + 1e-9, "{lambda}: {mean}");
        }
    }

    #[test]
    fn convert_matrix_examples() {
        let a = WeightMatrix::dense(vec![vec![0.0, 0.0, 1.5], vec![0.0, 0.0, 0.1], vec![1.5, 0.1, 0.0]]).unwrap();
        let b = convert_matrix(&a).unwrap();
        assert_eq!(b.get(0, 1), 0.0);
        assert!((b.get(0, 2) - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let (x, nf) = (0.1f64, 3.0f64);
        assert!((b.get(1, 2) - x).abs() <= x * x / nf * (1.0 + x / nf));

        let bad = WeightMatrix::dense(vec![vec![0.0, 3.0, 0.0], vec![3.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(convert_matrix(&bad), Err(Error::ConversionUndefined { .. })));
        // a large diagonal never reaches the sampler
        let diag = WeightMatrix::dense(vec![vec![7.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(convert_matrix(&diag).is_ok());
    }

    #[test]
    fn iid_types() {
        let mut rng = RngStream::new(16, 0).rng();
        let a = sample_iid_types(&StepKernel::constant(1.5).unwrap(), 6, &mut rng).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(a.get(i, j), if i == j { 0.0 } else { 1.5 });
            }
        }
        let z = sample_iid_types(&StepKernel::uniform(vec![vec![0.0; 2]; 2]).unwrap(), 5, &mut rng).unwrap();
        assert_eq!(z.max_entry(), 0.0);

        let k = StepKernel::uniform(vec![vec![1.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let n = 10_000;
        let a = sample_iid_types(&k, n, &mut rng).unwrap();
        let Entries::Typed { types, .. } = a.entries() else { panic!() };
        let zeros = types.iter().filter(|&&t| t == 0).count() as f64;
        assert!((zeros - n as f64 / 2.0).abs() < 3.0 * (n as f64 / 4.0).sqrt());
        assert!(sample_iid_types(&k, 0, &mut rng).is_err());
    }

    #[test]
    fn typed_sampler_matches_pair_scan_rates() {
        // block sampling and the dense pair scan must produce the same law
        let k = StepKernel::uniform(vec![vec![40.0, 5.0], vec![5.0, 20.0]]).unwrap();
        let types = vec![0, 1, 0, 1, 1, 0, 0, 1, 0, 1];
        let typed = WeightMatrix::typed(types, &k).unwrap();
        let dense = WeightMatrix::dense(typed.to_dense_rows()).unwrap();
        let reps = 20_000;
        let mut rng = RngStream::new(17, 0).rng();
        let mut freq = |a: &WeightMatrix| {
            let mut f = vec![0usize; 100];
            for _ in 0..reps {
                for (u, v) in sample_bernoulli(a, &mut rng).unwrap().edges().iter().copied() {
                    f[u * 10 + v] += 1;
                }
            }
            f
        };
        let (ft, fd) = (freq(&typed), freq(&dense));
        for u in 0..10 {
            for v in u + 1..10 {
                let p = (typed.get(u, v) / 10.0).min(1.0);
                let sd = (p * (1.0 - p) * reps as f64).sqrt().max(1.0);
                let expected = p * reps as f64;
                assert!((ft[u * 10 + v] as f64 - expected).abs() < 5.0 * sd);
                assert!((fd[u * 10 + v] as f64 - expected).abs() < 5.0 * sd);
            }
        }
    }

    #[test]
    fn percolation_examples() {
        let mut rng = RngStream::new(18, 0).rng();
        let edges: Vec<_> = (0..1000).map(|i| (i, i + 1)).collect();
        let g = SparseGraph::new(1001, edges, false).unwrap();
        assert_eq!(percolate(&g, 1.0, &mut rng).unwrap(), g);
        assert_eq!(percolate(&g, 0.0, &mut rng).unwrap().num_edges(), 0);
        let kept = percolate(&g, 0.5, &mut rng).unwrap().num_edges() as f64;
        assert!((kept - 500.0).abs() < 3.0 * 250f64.sqrt());
        assert!(percolate(&g, 1.5, &mut rng).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let k = StepKernel::uniform(vec![vec![1.0, 3.0], vec![3.0, 0.5]]).unwrap();
        let run = || {
            let mut rng = RngStream::new(42, 7).rng();
            let a = sample_iid_types(&k, 2000, &mut rng).unwrap();
            sample_poisson_multi(&a, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }
}
