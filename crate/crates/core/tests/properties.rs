use irgraph::branching::{
    survival, survival_fixed_point, survival_lower_bound, t_isol, trees, SurvivalIteration,
};
use irgraph::components::{analyze, perturb, relabel, PerturbMode};
use irgraph::cutnorm::{cut_distance, cutnorm_heuristic, cutnorm_pm_exact, cutnorm_sets_exact, SearchBudget};
use irgraph::hypergraph::{
    arity_cutnorm, arity_marginal, clique_projection, one_edge_projection, HyperStepKernel, Hypergraph,
    SparseHypermatrix,
};
use irgraph::kernel::{apply_t, decompose_irreducible, marginal, operator_norm, scale, truncate};
use irgraph::{RngStream, SparseGraph, StepKernel, WeightMatrix};
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-10;

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn symmetric(m: usize, upper: &[f64]) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; m]; m];
    let mut it = upper.iter();
    for i in 0..m {
        for j in i..m {
            let v = *it.next().unwrap();
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    rows
}

/// Masses and upper-triangle values for an `m`-type kernel, values drawn from `lo..hi`.
fn kernel_parts(max_m: usize, lo: f64, hi: f64) -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
    (1..=max_m).prop_flat_map(move |m| {
        (
            prop::collection::vec(0.05f64..1.0, m),
            prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => lo..hi], m * (m + 1) / 2),
        )
            .prop_map(move |(mu, upper)| (normalized(mu), symmetric(m, &upper)))
    })
}

fn kernel(max_m: usize) -> impl Strategy<Value = StepKernel> {
    kernel_parts(max_m, 0.0, 5.0).prop_map(|(mu, rows)| StepKernel::new(mu, rows).unwrap())
}

fn signed_kernel(max_m: usize) -> impl Strategy<Value = StepKernel> {
    kernel_parts(max_m, -5.0, 5.0).prop_map(|(mu, rows)| StepKernel::new_signed(mu, rows).unwrap())
}

fn kernel_pair(max_m: usize) -> impl Strategy<Value = (StepKernel, StepKernel)> {
    kernel(max_m).prop_flat_map(|a| {
        let m = a.num_types();
        let mu = a.masses().to_vec();
        prop::collection::vec(0.0f64..5.0, m * (m + 1) / 2)
            .prop_map(move |upper| (a.clone(), StepKernel::new(mu.clone(), symmetric(m, &upper)).unwrap()))
    })
}

fn graph(max_n: usize) -> impl Strategy<Value = SparseGraph> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |pairs| {
            let edges = pairs.into_iter().filter(|(u, v)| u != v).collect();
            SparseGraph::new(n, edges, true).unwrap()
        })
    })
}

fn l1(k: &StepKernel) -> f64 {
    let mu = k.masses();
    (0..mu.len()).flat_map(|i| (0..mu.len()).map(move |j| (i, j))).map(|(i, j)| mu[i] * mu[j] * k.value(i, j).abs()).sum()
}

fn support_connected(k: &StepKernel) -> bool {
    let m = k.num_types();
    let mut seen = vec![false; m];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..m {
            if !seen[j] && k.value(i, j) > 0.0 {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn marginal_scales_exactly(k in kernel(8), c in 0.0f64..10.0) {
        let scaled = marginal(&scale(&k, c));
        let base = marginal(&k);
        for (i, (a, b)) in scaled.values().iter().zip(base.values()).enumerate() {
            // scaling each summand by c commutes with the sum up to one rounding per term
            prop_assert!((a - c * b).abs() <= 1e-12 * (c * b).abs().max(1e-300), "type {i}: {a} vs {}", c * b);
        }
    }

    #[test]
    fn operator_norm_is_homogeneous(k in kernel(8), c in 0.1f64..10.0) {
        let base = operator_norm(&k, TOL, 100_000).unwrap();
        let scaled = operator_norm(&scale(&k, c), TOL, 100_000).unwrap();
        prop_assert!((scaled - c * base).abs() <= 2.0 * TOL * c.max(1.0) * base.max(1.0));
    }

    #[test]
    fn truncation_does_not_raise_the_norm(k in kernel(8), cap in 0.0f64..5.0) {
        let full = operator_norm(&k, TOL, 100_000).unwrap();
        let cut = operator_norm(&truncate(&k, cap), TOL, 100_000).unwrap();
        prop_assert!(cut <= full + 2.0 * TOL * full.max(1.0));
    }

    #[test]
    fn apply_t_is_linear(
        k in kernel(8),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let m = k.num_types();
        let mut rng = RngStream::new(seed, 0).rng();
        let f: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| alpha * x + beta * y).collect();
        let lhs = apply_t(&k, &combo).unwrap();
        let (tf, tg) = (apply_t(&k, &f).unwrap(), apply_t(&k, &g).unwrap());
        for i in 0..m {
            let rhs = alpha * tf[i] + beta * tg[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn single_block_iff_connected(k in kernel(8)) {
        let dec = decompose_irreducible(&k);
        prop_assert_eq!(dec.is_irreducible(), support_connected(&k));
        for block in &dec.blocks {
            prop_assert!(decompose_irreducible(&block.kernel).is_irreducible());
        }
    }

    #[test]
    fn cut_norm_sandwich(w in signed_kernel(8)) {
        let sets = cutnorm_sets_exact(&w).unwrap().value;
        let pm = cutnorm_pm_exact(&w).unwrap().value;
        prop_assert!(sets <= pm && pm <= 4.0 * sets, "sets {sets}, pm {pm}");
        prop_assert!(w.integral().abs() <= sets + 1e-12);
        prop_assert!(sets <= l1(&w) + 1e-12);
    }

    #[test]
    fn cut_norm_ignores_relabeling(w in signed_kernel(8), seed in any::<u64>()) {
        let m = w.num_types();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut rng = RngStream::new(seed, 0).rng();
        for i in (1..m).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let moved = w.permuted(&perm).unwrap();
        for (a, b) in [
            (cutnorm_sets_exact(&w).unwrap().value, cutnorm_sets_exact(&moved).unwrap().value),
            (cutnorm_pm_exact(&w).unwrap().value, cutnorm_pm_exact(&moved).unwrap().value),
        ] {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn heuristic_is_a_lower_bound(w in signed_kernel(12), seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0).rng();
        let h = cutnorm_heuristic(&w, 5, &mut rng).unwrap();
        prop_assert!(h.value <= cutnorm_sets_exact(&w).unwrap().value + 1e-12);
        prop_assert!((h.witness_value(&w) - h.value).abs() <= 1e-12 * h.value.max(1.0));
    }

    #[test]
    fn marginals_contract((a, b) in kernel_pair(12)) {
        let w = a.difference(&b).unwrap();
        let (la, lb) = (marginal(&a), marginal(&b));
        let gap: f64 = a.masses().iter().zip(la.values().iter().zip(lb.values())).map(|(mu, (x, y))| mu * (x - y).abs()).sum();
        prop_assert!(gap <= cutnorm_pm_exact(&w).unwrap().value + 1e-10);
    }

    #[test]
    fn analyze_is_relabeling_invariant(g in graph(40), seed in any::<u64>()) {
        let n = g.n();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = RngStream::new(seed, 0).rng();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(analyze(&relabel(&g, &perm).unwrap()), analyze(&g));
    }

    #[test]
    fn adding_an_edge_is_monotone(g in graph(40), u in any::<prop::sample::Index>(), v in any::<prop::sample::Index>()) {
        let n = g.n();
        let (u, v) = (u.index(n), v.index(n));
        prop_assume!(u != v);
        let mut edges = g.edges().to_vec();
        edges.push((u, v));
        let before = analyze(&g);
        let after = analyze(&SparseGraph::new(n, edges, true).unwrap());
        prop_assert!(after.c1 >= before.c1);
        prop_assert!(after.components <= before.components);
    }

    #[test]
    fn zero_perturbation_is_identity(g in graph(40), seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0).rng();
        for mode in [PerturbMode::Random, PerturbMode::AdversarialGreedy] {
            let p = perturb(&g, 0, 0, 0, mode, &mut rng).unwrap();
            prop_assert_eq!(p.graph.edges(), g.edges());
            prop_assert_eq!(p.graph.n(), g.n());
        }
    }

    #[test]
    fn fixed_point_iterates_decrease(k in kernel(6)) {
        let mut it = SurvivalIteration::new(&k);
        let mut prev = it.current().to_vec();
        for _ in 0..200 {
            it.step();
            prop_assert!(it.current().iter().zip(&prev).all(|(a, b)| a <= b));
            prev = it.current().to_vec();
        }
    }

    #[test]
    fn survival_is_monotone_in_scale(k in kernel(5)) {
        let norm = operator_norm(&k, TOL, 100_000).unwrap();
        prop_assume!(norm > 0.0);
        let mut last = 0.0;
        for step in 1..=12 {
            let c = step as f64 * 0.25 / norm;
            let scaled = scale(&k, c);
            // keep away from the critical point where convergence is sublinear
            if (c * norm - 1.0).abs() < 0.05 {
                continue;
            }
            let rho = survival(&scaled).unwrap();
            if c * norm < 1.0 {
                prop_assert_eq!(rho, 0.0);
            }
            prop_assert!(rho + 1e-9 >= last, "rho {rho} after {last}");
            last = rho;
            prop_assert!(survival_lower_bound(&scaled).unwrap() <= rho + 1e-9);
        }
    }

    #[test]
    fn hyperkernel_values_are_symmetric(seed in any::<u64>(), m in 1usize..5, r in 2usize..5) {
        let mut rng = RngStream::new(seed, 0).rng();
        let mu = normalized((0..m).map(|_| rng.random_range(0.1..1.0)).collect());
        let table: Vec<f64> = (0..m.pow(r as u32)).map(|_| rng.random_range(0.0..3.0)).collect();
        // defined on sorted tuples, so every permutation must read the same value
        let k = HyperStepKernel::from_fn(mu, r, |t| {
            let idx = t.iter().fold(0, |acc, &x| acc * m + x);
            if t.len() == r { table[idx] } else { 0.0 }
        }).unwrap();
        for _ in 0..20 {
            let tuple: Vec<usize> = (0..r).map(|_| rng.random_range(0..m)).collect();
            let mut shuffled = tuple.clone();
            for i in (1..r).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            prop_assert_eq!(k.value(&tuple), k.value(&shuffled));
        }
    }

    #[test]
    fn hypermatrix_lookup_any_order(seed in any::<u64>(), n in 3usize..8) {
        let mut rng = RngStream::new(seed, 0).rng();
        let mut entries = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    if rng.random_bool(0.3) {
                        entries.push((vec![a, b, c], rng.random_range(0.1..2.0)));
                    }
                }
            }
        }
        let h = SparseHypermatrix::from_entries(n, 3, entries.clone()).unwrap();
        for (t, v) in &entries {
            prop_assert_eq!(h.get(&[t[2], t[0], t[1]]), *v);
            prop_assert_eq!(h.get(&[t[1], t[2], t[0]]), *v);
        }
        let stored: std::collections::BTreeSet<Vec<usize>> = entries.iter().map(|e| e.0.clone()).collect();
        let probe = vec![0, 1, 2];
        if !stored.contains(&probe) {
            prop_assert_eq!(h.get(&probe), 0.0);
        }
    }

    #[test]
    fn projections_match_the_hypergraph(seed in any::<u64>(), n in 2usize..30) {
        let mut rng = RngStream::new(seed, 0).rng();
        let count = rng.random_range(0..2 * n);
        let hyperedges: Vec<Vec<usize>> = (0..count)
            .map(|_| {
                let r = rng.random_range(2..=n.min(4));
                let mut pool: Vec<usize> = (0..n).collect();
                for i in 0..r {
                    let j = rng.random_range(i..n);
                    pool.swap(i, j);
                }
                pool.truncate(r);
                pool
            })
            .collect();
        let h = Hypergraph::new(n, hyperedges.clone()).unwrap();
        prop_assert_eq!(one_edge_projection(&h, &mut rng).num_edges(), h.num_hyperedges());

        let mut label: Vec<usize> = (0..n).collect();
        fn find(label: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while label[r] != r {
                r = label[r];
            }
            r
        }
        for e in &hyperedges {
            let a = find(&mut label, e[0]);
            for &v in &e[1..] {
                let b = find(&mut label, v);
                let a = find(&mut label, a);
                label[b] = a;
            }
        }
        let g = clique_projection(&h);
        let mut sizes = std::collections::BTreeMap::new();
        for v in 0..n {
            let r = find(&mut label, v);
            *sizes.entry(r).or_insert(0usize) += 1;
        }
        let stats = analyze(&g);
        prop_assert_eq!(stats.components, sizes.len());
        prop_assert_eq!(stats.c1, sizes.values().copied().max().unwrap());
    }
}

/// `sup |int_{S1 x S2 x S3} w|` by enumerating all three type sets.
fn brute_cutnorm3(mu: &[f64], w: &[f64]) -> f64 {
    let m = mu.len();
    let mut best: f64 = 0.0;
    for s1 in 0u32..1 << m {
        for s2 in 0u32..1 << m {
            for s3 in 0u32..1 << m {
                let mut total = 0.0;
                for i in (0..m).filter(|&i| s1 >> i & 1 == 1) {
                    for j in (0..m).filter(|&j| s2 >> j & 1 == 1) {
                        for k in (0..m).filter(|&k| s3 >> k & 1 == 1) {
                            total += w[(i * m + j) * m + k] * mu[i] * mu[j] * mu[k];
                        }
                    }
                }
                best = best.max(total.abs());
            }
        }
    }
    best
}

#[test]
fn three_kernel_cut_norm_and_marginal_contraction() {
    let root = RngStream::new(31, 0);
    for case in 0..24u64 {
        let mut rng = root.child(case).rng();
        let m = 1 + case as usize % 6;
        let mu = normalized((0..m).map(|_| rng.random_range(0.1..1.0)).collect());
        let table: Vec<f64> = (0..m * m * m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let k = HyperStepKernel::new_signed(
            mu.clone(),
            vec![
                vec![0.0; m * m],
                {
                    let mut w = vec![0.0; m * m * m];
                    for i in 0..m {
                        for j in 0..m {
                            for l in 0..m {
                                let mut t = [i, j, l];
                                t.sort_unstable();
                                w[(i * m + j) * m + l] = table[(t[0] * m + t[1]) * m + t[2]];
                            }
                        }
                    }
                    w
                },
            ],
        )
        .unwrap();
        let brute = brute_cutnorm3(&mu, k.array(3).unwrap());
        let fast = arity_cutnorm(&k, 3).unwrap();
        assert!((brute - fast).abs() <= 1e-12 * brute.max(1.0), "m = {m}: {brute} vs {fast}");
        let hat = arity_marginal(&k, 3).unwrap();
        let hat_norm = cutnorm_sets_exact(&hat).unwrap().value;
        assert!(hat_norm <= brute + 1e-12, "m = {m}: marginal {hat_norm} above {brute}");
    }
}

#[test]
fn cut_distance_is_symmetric() {
    let root = RngStream::new(5, 0);
    for case in 0..12u64 {
        let mut rng = root.child(case).rng();
        let n = 2 + case as usize % 5;
        let mut rows = || -> WeightMatrix {
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    let v = if rng.random_bool(0.5) { rng.random_range(0.0..4.0) } else { 0.0 };
                    a[i][j] = v;
                    a[j][i] = v;
                }
            }
            WeightMatrix::dense(a).unwrap()
        };
        let (a, b) = (rows(), rows());
        let mut rng = root.child(100 + case).rng();
        let ab = cut_distance(&a, &b, SearchBudget::Exhaustive, &mut rng).unwrap();
        let ba = cut_distance(&b, &a, SearchBudget::Exhaustive, &mut rng).unwrap();
        assert!(ab.exact && ba.exact);
        assert!((ab.value - ba.value).abs() <= 1e-12, "{} vs {}", ab.value, ba.value);
    }
}

#[test]
fn fixed_point_agrees_with_lower_bound_on_constants() {
    for c in [1.5, 2.0, 3.0, 5.0] {
        let k = StepKernel::constant(c).unwrap();
        let rho = survival_fixed_point(&k, TOL, 100_000).unwrap().rho;
        assert!(survival_lower_bound(&k).unwrap() <= rho + TOL);
    }
}

/// For kernels bounded by `M`, swapping one edge factor or one vertex
/// weight `exp(-lambda)` at a time gives
/// `|t(T, W) - t(T, W')| <= (e M^(e-1) + k M^e) |W - W'|_pm`
/// with `e = k - 1` edges. The fitted constant over two batches of pairs
/// must stay below it.
#[test]
fn tree_integrals_are_lipschitz_in_the_cut_norm() {
    const M: f64 = 5.0;
    let root = RngStream::new(77, 0);
    let batch = |offset: u64, tree: &irgraph::branching::LabelledTree| -> f64 {
        let mut worst: f64 = 0.0;
        for case in 0..150u64 {
            let mut rng = root.child(offset + case).rng();
            let m = rng.random_range(1..=10);
            let mu = normalized((0..m).map(|_| rng.random_range(0.1..1.0)).collect());
            let mut draw = || {
                let upper: Vec<f64> = (0..m * (m + 1) / 2).map(|_| rng.random_range(0.0..M)).collect();
                StepKernel::new(mu.clone(), symmetric(m, &upper)).unwrap()
            };
            let w = draw();
            let v = draw();
            let dist = cutnorm_pm_exact(&w.difference(&v).unwrap()).unwrap().value;
            if dist > 1e-9 {
                worst = worst.max((t_isol(tree, &w) - t_isol(tree, &v)).abs() / dist);
            }
        }
        worst
    };
    for order in 1..=4 {
        let e = (order - 1) as i32;
        let bound = e as f64 * M.powi(e - 1) + order as f64 * M.powi(e);
        for tree in trees(order).unwrap() {
            let fitted = batch(0, &tree).max(batch(10_000, &tree));
            assert!(fitted <= bound, "order {order}: fitted {fitted} above {bound}");
        }
    }
}
