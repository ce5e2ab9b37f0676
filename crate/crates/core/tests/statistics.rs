use irgraph::branching::{population_law_mc, population_law_treesum, survival_mc};
use irgraph::components::analyze;
use irgraph::graphgen::{
    polarity_graph, sample_bernoulli, sample_iid_types, sample_poisson_multi, sample_poisson_simple,
};
use irgraph::rng::map_replicas;
use irgraph::{RngStream, SparseGraph, StepKernel, WeightMatrix};
use rand::Rng;

fn three_vertex() -> WeightMatrix {
    WeightMatrix::dense(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 4.5], vec![2.0, 4.5, 0.0]]).unwrap()
}

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Per-pair multiplicity counts summed over `samples` graphs, plus how many
/// graphs contained each pair at least once.
fn pair_counts(samples: usize, root: RngStream, draw: fn(&WeightMatrix, &mut irgraph::rng::StreamRng) -> SparseGraph) -> ([f64; 3], [f64; 3]) {
    let a = three_vertex();
    let parts = map_replicas(root, 16, |_, rng| {
        let (mut copies, mut present) = ([0u64; 3], [0u64; 3]);
        for _ in 0..samples / 16 {
            let g = draw(&a, rng);
            let mut seen = [false; 3];
            for &(u, v) in g.edges() {
                let p = PAIRS.iter().position(|&e| e == (u.min(v), u.max(v))).unwrap();
                copies[p] += 1;
                seen[p] = true;
            }
            for p in 0..3 {
                present[p] += seen[p] as u64;
            }
        }
        (copies, present)
    });
    let (mut copies, mut present) = ([0.0; 3], [0.0; 3]);
    for (c, p) in parts {
        for i in 0..3 {
            copies[i] += c[i] as f64;
            present[i] += p[i] as f64;
        }
    }
    (copies, present)
}

#[test]
fn three_vertex_edge_laws() {
    let samples = 1_000_000usize;
    let s = samples as f64;
    let a = three_vertex();
    let weight = |p: usize| a.get(PAIRS[p].0, PAIRS[p].1) / 3.0;

    let (_, present) = pair_counts(samples, RngStream::new(1, 0), |a, rng| sample_bernoulli(a, rng).unwrap());
    for p in 0..3 {
        let q = weight(p).min(1.0);
        let sd = (q * (1.0 - q) / s).sqrt();
        assert!((present[p] / s - q).abs() <= 4.0 * sd + 1e-12, "bernoulli pair {p}");
    }

    let (_, present) = pair_counts(samples, RngStream::new(2, 0), |a, rng| sample_poisson_simple(a, rng).unwrap());
    for p in 0..3 {
        let q = 1.0 - (-weight(p)).exp();
        let sd = (q * (1.0 - q) / s).sqrt();
        assert!((present[p] / s - q).abs() <= 4.0 * sd, "poisson pair {p}");
    }

    let (copies, present) = pair_counts(samples, RngStream::new(3, 0), |a, rng| sample_poisson_multi(a, rng).unwrap());
    for p in 0..3 {
        let lambda = weight(p);
        assert!((copies[p] / s - lambda).abs() <= 4.0 * (lambda / s).sqrt(), "multi mean, pair {p}");
        let q = 1.0 - (-lambda).exp();
        assert!((present[p] / s - q).abs() <= 4.0 * (q * (1.0 - q) / s).sqrt(), "multi presence, pair {p}");
    }
}

#[test]
fn polarity_graph_is_quasi_random() {
    let q = 101u64;
    let g = polarity_graph(q).unwrap();
    let n = g.n();
    let p = (q + 1) as f64 / n as f64;
    let mut rng = RngStream::new(4, 0).rng();
    for _ in 0..50 {
        let mut inside = vec![false; n];
        let mut order: Vec<usize> = (0..n).collect();
        for i in 0..n / 2 {
            let j = rng.random_range(i..n);
            order.swap(i, j);
            inside[order[i]] = true;
        }
        let size = (n / 2) as f64;
        let e = g.edges().iter().filter(|&&(u, v)| inside[u] && inside[v]).count() as f64;
        let dev = (e - p * size * size / 2.0).abs() / (p * (n * n) as f64);
        assert!(dev <= 0.05, "deviation {dev}");
    }
}

#[test]
fn tree_sums_match_simulated_laws() {
    let kernels = [
        StepKernel::constant(1.5).unwrap(),
        StepKernel::constant(0.7).unwrap(),
        StepKernel::new(vec![0.3, 0.7], vec![vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap(),
    ];
    for (i, k) in kernels.iter().enumerate() {
        let exact = population_law_treesum(k, 6).unwrap();
        let mc = population_law_mc(k, 6, 200_000, RngStream::new(5, i as u64)).unwrap();
        for j in 1..=6 {
            let se = mc.standard_error(j).max(1e-6);
            assert!((mc.prob(j) - exact.prob(j)).abs() <= 4.0 * se, "kernel {i}, k = {j}: {} vs {}", mc.prob(j), exact.prob(j));
        }
    }
}

#[test]
fn population_cap_bias_is_small() {
    let k = StepKernel::new(vec![0.5, 0.5], vec![vec![0.0, 4.0], vec![4.0, 0.0]]).unwrap();
    let low = survival_mc(&k, 100_000, 1_000, RngStream::new(6, 0)).unwrap();
    let high = survival_mc(&k, 100_000, 10_000, RngStream::new(6, 1)).unwrap();
    let se = (low.std_error.powi(2) + high.std_error.powi(2)).sqrt();
    assert!((low.mean - high.mean).abs() <= 4.0 * se, "{low:?} vs {high:?}");
}

#[test]
fn samples_do_not_depend_on_thread_count() {
    let k = StepKernel::new(vec![0.25, 0.75], vec![vec![3.0, 1.0], vec![1.0, 2.0]]).unwrap();
    let run = || {
        map_replicas(RngStream::new(7, 3), 12, |_, rng| {
            let a = sample_iid_types(&k, 5_000, rng).unwrap();
            let g = sample_bernoulli(&a, rng).unwrap();
            (g.edges().to_vec(), analyze(&g))
        })
    };
    let pool = |threads| rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let one = pool(1).install(run);
    let four = pool(4).install(run);
    assert_eq!(one, four);
    assert_eq!(one, run());
}
