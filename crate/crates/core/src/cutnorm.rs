//! Cut norms of signed step kernels and the cut distance between weight
//! matrices.
//!
//! Two versions are provided and never substituted for one another:
//!
//! * the set version `sup_{S,T} |sum_{i in S, j in T} mu_i mu_j w_ij|`
//!   ([`cutnorm_sets_exact`], [`cutnorm_heuristic`]);
//! * the functional version `sup_{|f|,|g| <= 1} |sum f_i g_j mu_i mu_j w_ij|`,
//!   where it suffices to take `f, g` with values `+-1` ([`cutnorm_pm_exact`]).
//!
//! They satisfy `sets <= pm <= 4 sets`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{StepKernel, WeightMatrix};

/// Largest number of types the exact routines will enumerate.
pub const EXACT_MAX_TYPES: usize = 24;
/// Largest size for which [`cut_distance`] enumerates all permutations.
pub const EXHAUSTIVE_MAX_N: usize = 8;

// Below this size every subset is evaluated from scratch; above it the
// enumeration walks a Gray code and only the winner is re-evaluated.
const DIRECT_MAX_TYPES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutNorm {
    Sets,
    Pm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    Sets { rows: Vec<usize>, cols: Vec<usize> },
    Signs { f: Vec<i8>, g: Vec<i8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutNormResult {
    pub value: f64,
    pub witness: Witness,
    pub exact: bool,
}

impl CutNormResult {
    /// The objective evaluated directly at the witness.
    pub fn witness_value(&self, k: &StepKernel) -> f64 {
        let mu = k.masses();
        match &self.witness {
            Witness::Sets { rows, cols } => {
                let mut total = 0.0;
                for &j in cols {
                    total += mu[j] * rows.iter().map(|&i| mu[i] * k.value(i, j)).sum::<f64>();
                }
                total.abs()
            }
            Witness::Signs { f, g } => {
                let m = k.num_types();
                let mut total = 0.0;
                for j in 0..m {
                    let col: f64 = (0..m).map(|i| f[i] as f64 * mu[i] * k.value(i, j)).sum();
                    total += g[j] as f64 * mu[j] * col;
                }
                total.abs()
            }
        }
    }
}

fn check_budget(k: &StepKernel) -> Result<()> {
    if k.num_types() > EXACT_MAX_TYPES {
        return Err(Error::BudgetExceeded(format!(
            "{} types exceeds the exact limit of {EXACT_MAX_TYPES}; use cutnorm_heuristic",
            k.num_types()
        )));
    }
    Ok(())
}

/// Optimal column set for a fixed row set, for one sign of the objective.
/// Returns the value `sign * sum_{j in T} mu_j c_j` and `T`.
fn close_columns(k: &StepKernel, rows: &[usize], sign: f64) -> (f64, Vec<usize>) {
    let mu = k.masses();
    let mut value = 0.0;
    let mut cols = Vec::new();
    for j in 0..k.num_types() {
        let c: f64 = sign * rows.iter().map(|&i| mu[i] * k.value(i, j)).sum::<f64>();
        if c > 0.0 {
            value += mu[j] * c;
            cols.push(j);
        }
    }
    (value, cols)
}

fn best_closure(k: &StepKernel, rows: &[usize]) -> (f64, Vec<usize>) {
    let pos = close_columns(k, rows, 1.0);
    let neg = close_columns(k, rows, -1.0);
    if neg.0 > pos.0 {
        neg
    } else {
        pos
    }
}

fn members(mask: u32, m: usize) -> Vec<usize> {
    (0..m).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Exact set-version cut norm: enumerate the row set, close the column set.
pub fn cutnorm_sets_exact(k: &StepKernel) -> Result<CutNormResult> {
    check_budget(k)?;
    let m = k.num_types();
    let (mut best, mut best_rows, mut best_cols) = (0.0, vec![], vec![]);
    if m <= DIRECT_MAX_TYPES {
        for mask in 1u32..(1 << m) {
            let rows = members(mask, m);
            let (value, cols) = best_closure(k, &rows);
            if value > best {
                (best, best_rows, best_cols) = (value, rows, cols);
            }
        }
    } else {
        let mask = gray_search(k, |col, mu| mu * col.max(0.0), |col, mu| -mu * col.min(0.0), false);
        best_rows = members(mask, m);
        (best, best_cols) = best_closure(k, &best_rows);
    }
    if best_cols.is_empty() {
        best_rows.clear();
    }
    Ok(CutNormResult {
        value: best,
        witness: Witness::Sets { rows: best_rows, cols: best_cols },
        exact: true,
    })
}

/// Walks all subsets (or sign vectors) in Gray-code order keeping running
/// column sums, returning the mask with the largest objective. Row `i` enters
/// the sums with weight `+mu_i` when its bit is set; for sign vectors
/// (`pm = true`) it flips between `-mu_i` and `+mu_i`.
fn gray_search(
    k: &StepKernel,
    pos: impl Fn(f64, f64) -> f64,
    neg: impl Fn(f64, f64) -> f64,
    pm: bool,
) -> u32 {
    let m = k.num_types();
    let mu = k.masses();
    let mut cols = vec![0.0; m];
    if pm {
        for (j, c) in cols.iter_mut().enumerate() {
            *c = -(0..m).map(|i| mu[i] * k.value(i, j)).sum::<f64>();
        }
    }
    let eval = |cols: &[f64]| {
        let p: f64 = cols.iter().zip(mu).map(|(&c, &w)| pos(c, w)).sum();
        let n: f64 = cols.iter().zip(mu).map(|(&c, &w)| neg(c, w)).sum();
        p.max(n)
    };
    let mut best = eval(&cols);
    let mut best_mask = 0u32;
    let mut mask = 0u32;
    let step = if pm { 2.0 } else { 1.0 };
    for t in 1u64..(1u64 << m) {
        let bit = t.trailing_zeros() as usize;
        mask ^= 1 << bit;
        let s = if mask >> bit & 1 == 1 { step } else { -step };
        let w = s * mu[bit];
        for (j, c) in cols.iter_mut().enumerate() {
            *c += w * k.value(bit, j);
        }
        let v = eval(&cols);
        if v > best {
            best = v;
            best_mask = mask;
        }
    }
    best_mask
}

fn signs_from_mask(mask: u32, m: usize) -> Vec<i8> {
    (0..m).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect()
}

fn pm_closure(k: &StepKernel, f: &[i8]) -> (f64, Vec<i8>) {
    let m = k.num_types();
    let mu = k.masses();
    let mut value = 0.0;
    let mut g = Vec::with_capacity(m);
    for j in 0..m {
        let c: f64 = (0..m).map(|i| f[i] as f64 * mu[i] * k.value(i, j)).sum();
        value += mu[j] * c.abs();
        g.push(if c < 0.0 { -1 } else { 1 });
    }
    (value, g)
}

/// Exact functional-version cut norm over `+-1` test functions.
pub fn cutnorm_pm_exact(k: &StepKernel) -> Result<CutNormResult> {
    check_budget(k)?;
    let m = k.num_types();
    let (best, f, g) = if m <= DIRECT_MAX_TYPES {
        // f and -f give the same value, so fix f_0 = +1
        let mut best = (f64::NEG_INFINITY, vec![], vec![]);
        for half in 0u32..(1 << (m - 1)) {
            let f = signs_from_mask(half << 1 | 1, m);
            let (value, g) = pm_closure(k, &f);
            if value > best.0 {
                best = (value, f, g);
            }
        }
        best
    } else {
        let mask = gray_search(k, |c, w| w * c.abs(), |_, _| 0.0, true);
        let f = signs_from_mask(mask, m);
        let (value, g) = pm_closure(k, &f);
        (value, f, g)
    };
    Ok(CutNormResult { value: best, witness: Witness::Signs { f, g }, exact: true })
}

/// Exact cut norm of the requested version.
pub fn cutnorm_exact(k: &StepKernel, norm: CutNorm) -> Result<CutNormResult> {
    match norm {
        CutNorm::Sets => cutnorm_sets_exact(k),
        CutNorm::Pm => cutnorm_pm_exact(k),
    }
}

/// Lower bound on the set-version cut norm by alternating maximization.
///
/// From a random row set, the optimal column set is computed in closed form,
/// then the optimal row set for those columns, and so on until the value
/// stops increasing; both signs of the objective are tried. The best over
/// `restarts` starts is returned.
pub fn cutnorm_heuristic<R: Rng + ?Sized>(k: &StepKernel, restarts: usize, rng: &mut R) -> Result<CutNormResult> {
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let m = k.num_types();
    let (mut best, mut best_rows, mut best_cols) = (0.0, vec![], vec![]);
    for _ in 0..restarts {
        let start: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.5)).collect();
        for sign in [1.0, -1.0] {
            let mut rows = start.clone();
            let (mut value, mut cols) = close_columns(k, &rows, sign);
            loop {
                // k is symmetric, so closing rows over fixed columns is the
                // same computation with the roles swapped
                let (_, new_rows) = close_columns(k, &cols, sign);
                let (new_value, new_cols) = close_columns(k, &new_rows, sign);
                if new_value <= value {
                    break;
                }
                (value, rows, cols) = (new_value, new_rows, new_cols);
            }
            if value > best {
                (best, best_rows, best_cols) = (value, rows, cols);
            }
        }
    }
    if best_cols.is_empty() {
        best_rows.clear();
    }
    Ok(CutNormResult {
        value: best,
        witness: Witness::Sets { rows: best_rows, cols: best_cols },
        exact: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchBudget {
    /// All `n!` permutations; requires `n <= 8`.
    Exhaustive,
    /// Simulated annealing over transpositions.
    Anneal { steps: usize },
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget::Anneal { steps: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutDistance {
    /// Upper bound on the cut distance (exact when `exact` is set).
    pub value: f64,
    /// Best relabeling found: vertex `i` of the rearranged `a` is vertex
    /// `permutation[i]` of `a`.
    pub permutation: Vec<usize>,
    pub exact: bool,
}

const ANNEAL_T0: f64 = 1.0;
const ANNEAL_T1: f64 = 1e-4;
const INNER_RESTARTS: usize = 10;

/// Cut distance between two equal-size weight matrices, minimizing the set
/// cut norm of `kappa_{A^pi} - kappa_B` over relabelings `pi` of `A`.
pub fn cut_distance<R: Rng + ?Sized>(
    a: &WeightMatrix,
    b: &WeightMatrix,
    budget: SearchBudget,
    rng: &mut R,
) -> Result<CutDistance> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch { expected: a.n(), actual: b.n() });
    }
    let n = a.n();
    let ka = a.as_kernel();
    let kb = b.as_kernel();
    let inner_exact = n <= EXACT_MAX_TYPES;
    let objective = |perm: &[usize], rng: &mut R| -> Result<f64> {
        let diff = ka.permuted(perm)?.difference(&kb)?;
        if inner_exact {
            Ok(cutnorm_sets_exact(&diff)?.value)
        } else {
            Ok(cutnorm_heuristic(&diff, INNER_RESTARTS, rng)?.value)
        }
    };
    match budget {
        SearchBudget::Exhaustive => {
            if n > EXHAUSTIVE_MAX_N {
                return Err(Error::BudgetExceeded(format!(
                    "exhaustive permutation search needs n <= {EXHAUSTIVE_MAX_N}, got {n}"
                )));
            }
            let mut perm: Vec<usize> = (0..n).collect();
            let mut best = (objective(&perm, rng)?, perm.clone());
            // Heap's algorithm
            let mut c = vec![0usize; n];
            let mut i = 1;
            while i < n {
                if c[i] < i {
                    if i % 2 == 0 {
                        perm.swap(0, i);
                    } else {
                        perm.swap(c[i], i);
                    }
                    let v = objective(&perm, rng)?;
                    if v < best.0 {
                        best = (v, perm.clone());
                    }
                    c[i] += 1;
                    i = 1;
                } else {
                    c[i] = 0;
                    i += 1;
                }
            }
            Ok(CutDistance { value: best.0, permutation: best.1, exact: inner_exact })
        }
        SearchBudget::Anneal { steps } => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            let mut current = objective(&perm, rng)?;
            let mut best = (current, perm.clone());
            if n >= 2 {
                for step in 0..steps {
                    let frac = if steps > 1 { step as f64 / (steps - 1) as f64 } else { 1.0 };
                    let temp = ANNEAL_T0 * (ANNEAL_T1 / ANNEAL_T0).powf(frac);
                    let i = rng.random_range(0..n);
                    let mut j = rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    perm.swap(i, j);
                    let v = objective(&perm, rng)?;
                    let delta = v - current;
                    if delta <= 0.0 || rng.random::<f64>() < (-delta / temp).exp() {
                        current = v;
                        if v < best.0 {
                            best = (v, perm.clone());
                        }
                    } else {
                        perm.swap(i, j);
                    }
                }
            }
            Ok(CutDistance { value: best.0, permutation: best.1, exact: false })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn pm_kernel() -> StepKernel {
        StepKernel::new_signed(vec![0.5, 0.5], vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap()
    }

    /// All (S, T) pairs.
    fn brute_sets(k: &StepKernel) -> f64 {
        let m = k.num_types();
        let mu = k.masses();
        let mut best: f64 = 0.0;
        for s in 0u32..(1 << m) {
            for t in 0u32..(1 << m) {
                let mut total = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        if s >> i & 1 == 1 && t >> j & 1 == 1 {
                            total += mu[i] * mu[j] * k.value(i, j);
                        }
                    }
                }
                best = best.max(total.abs());
            }
        }
        best
    }

    #[test]
    fn sets_examples() {
        let r = cutnorm_sets_exact(&StepKernel::constant(3.0).unwrap()).unwrap();
        assert_eq!(r.value, 3.0);
        assert_eq!(r.witness, Witness::Sets { rows: vec![0], cols: vec![0] });
        assert!(r.exact);

        let k = pm_kernel();
        assert_eq!(brute_sets(&k), 0.25);
        let r = cutnorm_sets_exact(&k).unwrap();
        assert_eq!(r.value, 0.25);
        assert_eq!(r.witness, Witness::Sets { rows: vec![0], cols: vec![0] });
        assert_eq!(r.witness_value(&k), r.value);

        let zero = StepKernel::uniform(vec![vec![0.0; 3]; 3]).unwrap();
        assert_eq!(cutnorm_sets_exact(&zero).unwrap().value, 0.0);
    }

    #[test]
    fn pm_examples() {
        let r = cutnorm_pm_exact(&pm_kernel()).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.witness, Witness::Signs { f: vec![1, -1], g: vec![1, -1] });
        let r = cutnorm_pm_exact(&StepKernel::constant(2.5).unwrap()).unwrap();
        assert_eq!(r.value, 2.5);
        assert_eq!(r.witness, Witness::Signs { f: vec![1], g: vec![1] });
        let zero = StepKernel::uniform(vec![vec![0.0; 2]; 2]).unwrap();
        assert_eq!(cutnorm_pm_exact(&zero).unwrap().value, 0.0);
    }

    #[test]
    fn budget_is_enforced() {
        let k = StepKernel::uniform(vec![vec![1.0; 25]; 25]).unwrap();
        assert!(matches!(cutnorm_sets_exact(&k), Err(Error::BudgetExceeded(_))));
        assert!(matches!(cutnorm_pm_exact(&k), Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn heuristic_examples() {
        let mut rng = RngStream::new(1, 0).rng();
        let c = StepKernel::constant(2.0).unwrap();
        let r = cutnorm_heuristic(&c, 3, &mut rng).unwrap();
        assert_eq!(r.value, 2.0);
        assert!(!r.exact);
        let k = StepKernel::uniform(vec![vec![1.5; 6]; 6]).unwrap();
        assert!((cutnorm_heuristic(&k, 1, &mut rng).unwrap().value - 1.5).abs() < 1e-12);
        let zero = StepKernel::uniform(vec![vec![0.0; 4]; 4]).unwrap();
        assert_eq!(cutnorm_heuristic(&zero, 2, &mut rng).unwrap().value, 0.0);
        assert!(cutnorm_heuristic(&c, 0, &mut rng).is_err());
    }

    #[test]
    fn gray_code_path_matches_direct_path() {
        let mut rng = RngStream::new(5, 0).rng();
        let m = 18;
        let mut rows = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i..m {
                let v: f64 = rng.random_range(-1.0..1.0);
                rows[i][j] = v;
                rows[j][i] = v;
            }
        }
        let k = StepKernel::new_signed(vec![1.0 / m as f64; m], rows).unwrap();
        let gray = cutnorm_sets_exact(&k).unwrap();
        // direct enumeration over the same 2^18 row sets
        let mut direct: f64 = 0.0;
        for mask in 1u32..(1 << m) {
            direct = direct.max(best_closure(&k, &members(mask, m)).0);
        }
        assert!((gray.value - direct).abs() < 1e-12);
        assert!((gray.witness_value(&k) - gray.value).abs() < 1e-12);

        let pm = cutnorm_pm_exact(&k).unwrap();
        let mut direct_pm: f64 = 0.0;
        for mask in 0u32..(1 << m) {
            direct_pm = direct_pm.max(pm_closure(&k, &signs_from_mask(mask, m)).0);
        }
        assert!((pm.value - direct_pm).abs() < 1e-12);
    }

    #[test]
    fn cut_distance_examples() {
        let mut rng = RngStream::new(2, 0).rng();
        let a = WeightMatrix::dense(vec![
            vec![0.0, 1.0, 3.0, 0.0],
            vec![1.0, 0.0, 2.0, 0.5],
            vec![3.0, 2.0, 0.0, 0.0],
            vec![0.0, 0.5, 0.0, 0.0],
        ])
        .unwrap();
        let d = cut_distance(&a, &a, SearchBudget::Exhaustive, &mut rng).unwrap();
        assert_eq!(d.value, 0.0);
        assert!(d.exact);

        let perm = [2, 0, 3, 1];
        let rows = (0..4).map(|i| (0..4).map(|j| a.get(perm[i], perm[j])).collect()).collect();
        let b = WeightMatrix::dense(rows).unwrap();
        assert_eq!(cut_distance(&a, &b, SearchBudget::Exhaustive, &mut rng).unwrap().value, 0.0);

        let ones = WeightMatrix::dense(vec![vec![1.0; 4]; 4]).unwrap();
        let zeros = WeightMatrix::dense(vec![vec![0.0; 4]; 4]).unwrap();
        assert_eq!(cut_distance(&ones, &zeros, SearchBudget::Exhaustive, &mut rng).unwrap().value, 1.0);

        let small = WeightMatrix::dense(vec![vec![0.0; 3]; 3]).unwrap();
        assert!(cut_distance(&a, &small, SearchBudget::Exhaustive, &mut rng).is_err());
        let big = WeightMatrix::constant(9, 1.0).unwrap();
        assert!(matches!(
            cut_distance(&big, &big, SearchBudget::Exhaustive, &mut rng),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn annealing_recovers_a_relabeling() {
        let mut rng = RngStream::new(3, 0).rng();
        let n = 10;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i != j && (i + j) % 3 == 0 { (i * j % 5) as f64 + 1.0 } else { 0.0 }).collect())
            .collect();
        let a = WeightMatrix::dense(rows).unwrap();
        let perm: Vec<usize> = vec![3, 7, 1, 0, 9, 2, 8, 5, 4, 6];
        let b_rows = (0..n).map(|i| (0..n).map(|j| a.get(perm[i], perm[j])).collect()).collect();
        let b = WeightMatrix::dense(b_rows).unwrap();
        let d = cut_distance(&a, &b, SearchBudget::Anneal { steps: 4000 }, &mut rng).unwrap();
        assert!(!d.exact);
        let identity = cut_distance(&a, &a, SearchBudget::Anneal { steps: 0 }, &mut rng).unwrap();
        // the annealer must do at least as well as a random start on the permuted pair
        assert!(d.value <= cutnorm_sets_exact(&a.as_kernel().difference(&b.as_kernel()).unwrap()).unwrap().value);
        assert!(identity.value >= 0.0);
    }
}
