//! Random hypergraphs built from hyperkernels and hypermatrices.
//!
//! An `r`-set `{i_1, ..., i_r}` of distinct vertices is a hyperedge with
//! probability `min(r! h / n^(r-1), 1)` (or `Poisson(r! h / n^(r-1))` times).
//! Replacing each hyperedge by a clique gives a graph with clustering; its
//! giant component is governed by the edge kernel
//! `k_e(x, y) = sum_r r (r - 1) int k_r(x, y, ...)`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::branching::{count_survivors, draw_type, FixedPointResult, GwOutcome, McEstimate, RootType, CRITICAL_SLACK};
use crate::cutnorm::cutnorm_sets_exact;
use crate::error::{Error, Result};
use crate::graphgen::blocks::{block_for, type_multisets};
use crate::graphgen::{zero_truncated_poisson, SparseGraph};
use crate::kernel::{operator_norm, Marginal, StepKernel, WeightMatrix, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::rng::RngStream;

/// Largest array a hyperkernel may hold for a single arity.
const MAX_ARRAY_LEN: usize = 1 << 24;

/// Hyperkernels with more types than this have no exact cut norm here.
pub const HYPER_CUTNORM_MAX_TYPES: usize = 10;

/// Finite-type hyperkernel `(k_2, ..., k_R)` over shared type masses.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperStepKernel {
    masses: Vec<f64>,
    /// `arrays[r - 2]` is `k_r`, row-major over `m^r` type tuples.
    arrays: Vec<Vec<f64>>,
    signed: bool,
}

impl HyperStepKernel {
    /// `arrays[r - 2]` holds the `m^r` values of `k_r`, first index most
    /// significant. Every array must be invariant under permuting
    /// coordinates.
    pub fn new(masses: Vec<f64>, arrays: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(masses, arrays, false)
    }

    pub fn new_signed(masses: Vec<f64>, arrays: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(masses, arrays, true)
    }

    /// Builds each `k_r` by evaluating `f` on sorted type tuples, which makes
    /// it symmetric by construction.
    pub fn from_fn(masses: Vec<f64>, max_arity: usize, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        let m = masses.len();
        let mut arrays = Vec::new();
        for r in 2..=max_arity {
            let len = array_len(m, r)?;
            let mut tuple = vec![0; r];
            let arr = (0..len)
                .map(|idx| {
                    decode_tuple(idx, m, &mut tuple);
                    tuple.sort_unstable();
                    f(&tuple)
                })
                .collect();
            arrays.push(arr);
        }
        Self::build(masses, arrays, false)
    }

    /// Single type, `k_r = values[r - 2]`.
    pub fn constant(values: &[f64]) -> Result<Self> {
        Self::new(vec![1.0], values.iter().map(|&v| vec![v]).collect())
    }

    /// Single type with only arity `r` present, `k_r = t`.
    pub fn uniform_arity(r: usize, t: f64) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidKernel(format!("arity {r} < 2")));
        }
        let mut values = vec![0.0; r - 1];
        values[r - 2] = t;
        Self::constant(&values)
    }

    fn build(masses: Vec<f64>, arrays: Vec<Vec<f64>>, signed: bool) -> Result<Self> {
        // the masses are validated by building a throwaway graph kernel
        let m = masses.len();
        StepKernel::new(masses.clone(), vec![vec![0.0; m]; m])?;
        if arrays.is_empty() {
            return Err(Error::InvalidKernel("hyperkernel needs at least arity 2".into()));
        }
        let mut tuple = Vec::new();
        let mut sorted = Vec::new();
        for (slot, arr) in arrays.iter().enumerate() {
            let r = slot + 2;
            let len = array_len(m, r)?;
            if arr.len() != len {
                return Err(Error::DimensionMismatch { expected: len, actual: arr.len() });
            }
            tuple.resize(r, 0);
            for (idx, &v) in arr.iter().enumerate() {
                if !v.is_finite() || (!signed && v < 0.0) {
                    return Err(Error::InvalidKernel(format!("arity {r}: value {v} at index {idx}")));
                }
                decode_tuple(idx, m, &mut tuple);
                sorted.clone_from(&tuple);
                sorted.sort_unstable();
                if arr[encode_tuple(&sorted, m)] != v {
                    return Err(Error::InvalidKernel(format!("arity {r}: not symmetric at {tuple:?}")));
                }
            }
        }
        Ok(Self { masses, arrays, signed })
    }

    pub fn num_types(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn max_arity(&self) -> usize {
        self.arrays.len() + 1
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    /// `k_r(t)` with `r = t.len()`; arities above the maximum are 0.
    pub fn value(&self, types: &[usize]) -> f64 {
        let r = types.len();
        if r < 2 || r > self.max_arity() {
            return 0.0;
        }
        self.arrays[r - 2][encode_tuple(types, self.num_types())]
    }

    /// The flat array of `k_r`.
    pub fn array(&self, r: usize) -> Option<&[f64]> {
        if r < 2 {
            return None;
        }
        self.arrays.get(r - 2).map(Vec::as_slice)
    }

    /// `sum_r r int k_r`.
    pub fn integral(&self) -> f64 {
        (2..=self.max_arity())
            .map(|r| {
                let w = mass_products(&self.masses, r);
                r as f64 * self.arrays[r - 2].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum()
    }

    /// `self - other` as a signed hyperkernel; arities missing on one side
    /// count as zero.
    pub fn difference(&self, other: &HyperStepKernel) -> Result<HyperStepKernel> {
        if self.masses != other.masses {
            return Err(Error::InvalidKernel("hyperkernels have different type masses".into()));
        }
        let m = self.num_types();
        let top = self.max_arity().max(other.max_arity());
        let mut arrays = Vec::new();
        for r in 2..=top {
            let len = array_len(m, r)?;
            let a = self.array(r);
            let b = other.array(r);
            arrays.push(
                (0..len)
                    .map(|i| a.map_or(0.0, |a| a[i]) - b.map_or(0.0, |b| b[i]))
                    .collect(),
            );
        }
        Ok(Self { masses: self.masses.clone(), arrays, signed: true })
    }

    /// `c k_r` for every arity.
    pub fn scaled(&self, c: f64) -> Result<HyperStepKernel> {
        let arrays = self.arrays.iter().map(|a| a.iter().map(|v| v * c).collect()).collect();
        Self::build(self.masses.clone(), arrays, self.signed || c < 0.0)
    }
}

pub(crate) fn array_len(m: usize, r: usize) -> Result<usize> {
    m.checked_pow(r as u32)
        .filter(|&len| len <= MAX_ARRAY_LEN)
        .ok_or_else(|| Error::BudgetExceeded(format!("{m}^{r} entries for arity {r}")))
}

fn decode_tuple(mut idx: usize, m: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = idx % m;
        idx /= m;
    }
}

fn encode_tuple(t: &[usize], m: usize) -> usize {
    t.iter().fold(0, |acc, &x| acc * m + x)
}

/// `prod mu_{t_l}` for every tuple of length `len`, in row-major order.
fn mass_products(masses: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..len {
        out = out.iter().flat_map(|&p| masses.iter().map(move |&mu| p * mu)).collect();
    }
    out
}

/// `k_e = sum_r r (r - 1) int k_r(x, y, ...)` over the last `r - 2`
/// coordinates.
pub fn edge_kernel(k: &HyperStepKernel) -> Result<StepKernel> {
    let m = k.num_types();
    let mut values = vec![0.0; m * m];
    for r in 2..=k.max_arity() {
        let w = mass_products(&k.masses, r - 2);
        let arr = &k.arrays[r - 2];
        let factor = (r * (r - 1)) as f64;
        for i in 0..m {
            for j in i..m {
                let base = (i * m + j) * w.len();
                let s: f64 = arr[base..base + w.len()].iter().zip(&w).map(|(a, b)| a * b).sum();
                values[i * m + j] += factor * s;
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            values[i * m + j] = values[j * m + i];
        }
    }
    StepKernel::from_flat(k.masses.clone(), values, k.signed)
}

/// Expected number of hyperedges at a vertex of each type,
/// `lambda_i = sum_r r int k_r(i, ...)`.
pub fn hyper_marginal(k: &HyperStepKernel) -> Marginal {
    let m = k.num_types();
    let mut out = vec![0.0; m];
    for r in 2..=k.max_arity() {
        let w = mass_products(&k.masses, r - 1);
        let arr = &k.arrays[r - 2];
        for (i, slot) in out.iter_mut().enumerate() {
            let row = &arr[i * w.len()..(i + 1) * w.len()];
            *slot += r as f64 * row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Marginal(out)
}

/// Marginal of `k_r` over its last `r - 2` coordinates.
pub fn arity_marginal(k: &HyperStepKernel, r: usize) -> Result<StepKernel> {
    let arr = k.array(r).ok_or_else(|| Error::InvalidArgument(format!("no arity {r}")))?;
    let m = k.num_types();
    let w = mass_products(&k.masses, r - 2);
    let mut values = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let base = (i * m + j) * w.len();
            let s: f64 = arr[base..base + w.len()].iter().zip(&w).map(|(a, b)| a * b).sum();
            values[i * m + j] = s;
            values[j * m + i] = s;
        }
    }
    StepKernel::from_flat(k.masses.clone(), values, k.signed)
}

/// Set-version cut norm of `k_r`:
/// `sup |int_{S_1 x ... x S_r} k_r|` over `r`-tuples of type sets.
///
/// Exact for `r = 2` (up to the graph limit on types) and for `r = 3` with at
/// most [`HYPER_CUTNORM_MAX_TYPES`] types.
pub fn arity_cutnorm(k: &HyperStepKernel, r: usize) -> Result<f64> {
    let arr = k.array(r).ok_or_else(|| Error::InvalidArgument(format!("no arity {r}")))?;
    let m = k.num_types();
    match r {
        2 => {
            let rows = arr.chunks(m).map(<[f64]>::to_vec).collect();
            Ok(cutnorm_sets_exact(&StepKernel::new_signed(k.masses.clone(), rows)?)?.value)
        }
        3 if m <= HYPER_CUTNORM_MAX_TYPES => Ok(cutnorm3(&k.masses, arr)),
        _ => Err(Error::BudgetExceeded(format!(
            "exact cut norm needs arity <= 3 and at most {HYPER_CUTNORM_MAX_TYPES} types (arity {r}, {m} types)"
        ))),
    }
}

/// Enumerates `S_1`, walks `S_2` in Gray-code order, and closes `S_3` in
/// closed form from the signs of the remaining column sums.
fn cutnorm3(mu: &[f64], w: &[f64]) -> f64 {
    let m = mu.len();
    let mut best: f64 = 0.0;
    let mut d = vec![0.0; m * m];
    let mut c = vec![0.0; m];
    for s1 in 0u32..1 << m {
        d.iter_mut().for_each(|x| *x = 0.0);
        for i in (0..m).filter(|&i| s1 >> i & 1 == 1) {
            for jk in 0..m * m {
                d[jk] += w[i * m * m + jk] * mu[i];
            }
        }
        c.iter_mut().for_each(|x| *x = 0.0);
        let mut s2 = 0u32;
        for step in 0u32..1 << m {
            if step > 0 {
                let j = step.trailing_zeros() as usize;
                s2 ^= 1 << j;
                let sign = if s2 >> j & 1 == 1 { 1.0 } else { -1.0 };
                for kk in 0..m {
                    c[kk] += sign * d[j * m + kk] * mu[j];
                }
            }
            let (mut pos, mut neg) = (0.0, 0.0);
            for kk in 0..m {
                let v = c[kk] * mu[kk];
                if v > 0.0 {
                    pos += v;
                } else {
                    neg -= v;
                }
            }
            best = best.max(pos).max(neg);
        }
    }
    best
}

/// `sum_r r |k_r|_cut`.
pub fn hyper_cutnorm(k: &HyperStepKernel) -> Result<f64> {
    (2..=k.max_arity()).map(|r| Ok(r as f64 * arity_cutnorm(k, r)?)).sum()
}

/// Storage behind a [`SparseHypermatrix`].
#[derive(Debug, Clone, PartialEq)]
pub enum HyperEntries {
    /// Sorted tuples of distinct vertices; absent tuples are 0.
    Sparse(BTreeMap<Vec<usize>, f64>),
    /// `h_{i_1..i_r} = k_r(types[i_1], ..., types[i_r])` on distinct vertices.
    Typed { types: Vec<usize>, kernel: HyperStepKernel },
}

/// Symmetric hypermatrix on `n` vertices with arities `2..=max_arity`.
/// Entries with a repeated index play no role and are always 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHypermatrix {
    n: usize,
    max_arity: usize,
    entries: HyperEntries,
}

impl SparseHypermatrix {
    /// Tuples may be given in any order; repeated indices are rejected.
    pub fn from_entries(
        n: usize,
        max_arity: usize,
        entries: impl IntoIterator<Item = (Vec<usize>, f64)>,
    ) -> Result<Self> {
        if max_arity < 2 {
            return Err(Error::InvalidHypermatrix(format!("max arity {max_arity} < 2")));
        }
        let mut map = BTreeMap::new();
        for (mut t, h) in entries {
            if t.len() < 2 || t.len() > max_arity {
                return Err(Error::InvalidHypermatrix(format!("tuple {t:?} has arity outside 2..={max_arity}")));
            }
            if let Some(&i) = t.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidHypermatrix(format!("index {i} out of range for n = {n}")));
            }
            if !(h >= 0.0) || !h.is_finite() {
                return Err(Error::InvalidHypermatrix(format!("value {h} at {t:?} must be finite and >= 0")));
            }
            t.sort_unstable();
            if t.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidHypermatrix(format!("tuple {t:?} repeats an index")));
            }
            if let Some(prev) = map.insert(t.clone(), h) {
                if prev != h {
                    return Err(Error::InvalidHypermatrix(format!("conflicting values for {t:?}")));
                }
            }
        }
        map.retain(|_, h| *h != 0.0);
        Ok(Self { n, max_arity, entries: HyperEntries::Sparse(map) })
    }

    pub fn empty(n: usize, max_arity: usize) -> Result<Self> {
        Self::from_entries(n, max_arity, [])
    }

    pub fn typed(types: Vec<usize>, kernel: &HyperStepKernel) -> Result<Self> {
        if kernel.is_signed() {
            return Err(Error::InvalidHypermatrix("hypermatrices must be nonnegative".into()));
        }
        let m = kernel.num_types();
        if let Some(t) = types.iter().find(|&&t| t >= m) {
            return Err(Error::InvalidHypermatrix(format!("type {t} out of range for {m} types")));
        }
        Ok(Self { n: types.len(), max_arity: kernel.max_arity(), entries: HyperEntries::Typed { types, kernel: kernel.clone() } })
    }

    /// Draws `n` iid types from the kernel's masses.
    pub fn sample_types<R: Rng + ?Sized>(kernel: &HyperStepKernel, n: usize, rng: &mut R) -> Result<Self> {
        let types = (0..n).map(|_| draw_type(kernel.masses(), rng)).collect();
        Self::typed(types, kernel)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_arity(&self) -> usize {
        self.max_arity
    }

    pub fn entries(&self) -> &HyperEntries {
        &self.entries
    }

    /// Value at any ordering of `tuple`.
    pub fn get(&self, tuple: &[usize]) -> f64 {
        let mut t = tuple.to_vec();
        t.sort_unstable();
        if t.len() < 2 || t.len() > self.max_arity || t.windows(2).any(|w| w[0] == w[1]) {
            return 0.0;
        }
        match &self.entries {
            HyperEntries::Sparse(map) => map.get(&t).copied().unwrap_or(0.0),
            HyperEntries::Typed { types, kernel } => {
                let tt: Vec<usize> = t.iter().map(|&v| types[v]).collect();
                kernel.value(&tt)
            }
        }
    }

    /// The hyperkernel with `n` types of mass `1/n` and `k_r = h` (zero on
    /// tuples with a repeated index).
    pub fn to_hyperkernel(&self) -> Result<HyperStepKernel> {
        let n = self.n;
        if n == 0 {
            return Err(Error::InvalidHypermatrix("no vertices".into()));
        }
        let mut arrays = Vec::new();
        for r in 2..=self.max_arity {
            let len = array_len(n, r)?;
            let mut t = vec![0; r];
            arrays.push(
                (0..len)
                    .map(|idx| {
                        decode_tuple(idx, n, &mut t);
                        self.get(&t)
                    })
                    .collect(),
            );
        }
        HyperStepKernel::new(vec![1.0 / n as f64; n], arrays)
    }
}

fn factorial(r: usize) -> f64 {
    (1..=r).map(|x| x as f64).product()
}

/// `A = sum_r r (r - 1) A_r` with `a^(r)_ij = n^-(r-2) sum h_{i j i_3 .. i_r}`.
///
/// A stored `r`-set holding `i` and `j` is reached by `(r - 2)!` orderings of
/// its other members, so it adds `r! h / n^(r-2)` to `a_ij`.
pub fn marginal_matrix(h: &SparseHypermatrix) -> Result<WeightMatrix> {
    let n = h.n;
    let nf = n as f64;
    match &h.entries {
        HyperEntries::Sparse(map) => {
            let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            for (t, &v) in map {
                let r = t.len();
                let add = factorial(r) * v / nf.powi(r as i32 - 2);
                for a in 0..r {
                    for b in a + 1..r {
                        *acc.entry((t[a], t[b])).or_insert(0.0) += add;
                    }
                }
            }
            WeightMatrix::from_triples(n, acc.into_iter().map(|((i, j), a)| (i, j, a)))
        }
        HyperEntries::Typed { types, kernel } => {
            let m = kernel.num_types();
            let counts = crate::kernel::type_counts(types, m);
            let mut values = vec![0.0; m * m];
            let mut rest = Vec::new();
            let mut full = Vec::new();
            for a in 0..m {
                for b in 0..m {
                    // free vertices once i (type a) and j (type b) are taken
                    let mut free: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                    free[a] -= 1.0;
                    free[b] -= 1.0;
                    let mut total = 0.0;
                    for r in 2..=kernel.max_arity() {
                        rest.resize(r - 2, 0);
                        let mut inner = 0.0;
                        for idx in 0..m.pow(r as u32 - 2) {
                            decode_tuple(idx, m, &mut rest);
                            full.clear();
                            full.extend([a, b]);
                            full.extend_from_slice(&rest);
                            let kv = kernel.value(&full);
                            if kv == 0.0 {
                                continue;
                            }
                            // injective placements of the remaining coordinates
                            let mut used = vec![0.0; m];
                            let mut ways = 1.0;
                            for &t in &rest {
                                ways *= (free[t] - used[t]).max(0.0);
                                used[t] += 1.0;
                            }
                            inner += kv * ways;
                        }
                        total += (r * (r - 1)) as f64 * inner / nf.powi(r as i32 - 2);
                    }
                    values[a * m + b] = total;
                }
            }
            let k = StepKernel::from_flat(vec![1.0 / m as f64; m], values, false)?;
            WeightMatrix::typed(types.clone(), &k)
        }
    }
}

/// A multiset of hyperedges, each a sorted set of at least two vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    n: usize,
    hyperedges: Vec<Vec<usize>>,
}

impl Hypergraph {
    pub fn new(n: usize, hyperedges: Vec<Vec<usize>>) -> Result<Self> {
        let mut hyperedges = hyperedges;
        for e in hyperedges.iter_mut() {
            e.sort_unstable();
            if e.len() < 2 {
                return Err(Error::InvalidHypermatrix(format!("hyperedge {e:?} has fewer than 2 vertices")));
            }
            if e.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidHypermatrix(format!("hyperedge {e:?} repeats a vertex")));
            }
            if e[e.len() - 1] >= n {
                return Err(Error::InvalidHypermatrix(format!("hyperedge {e:?} out of range for n = {n}")));
            }
        }
        hyperedges.sort_unstable();
        Ok(Self { n, hyperedges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hyperedges(&self) -> &[Vec<usize>] {
        &self.hyperedges
    }

    pub fn num_hyperedges(&self) -> usize {
        self.hyperedges.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperModel {
    /// Present with probability `min(r! h / n^(r-1), 1)`.
    Bernoulli,
    /// `Poisson(r! h / n^(r-1))` copies.
    PoissonMulti,
}

pub fn sample_hypergraph<R: Rng + ?Sized>(h: &SparseHypermatrix, model: HyperModel, rng: &mut R) -> Result<Hypergraph> {
    let n = h.n;
    let rate = |r: usize, v: f64| factorial(r) * v / (n as f64).powi(r as i32 - 1);
    let presence = |lambda: f64| match model {
        HyperModel::Bernoulli => lambda.min(1.0),
        HyperModel::PoissonMulti => -(-lambda).exp_m1(),
    };
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut push = |t: &[usize], lambda: f64, rng: &mut R| {
        let copies = match model {
            HyperModel::Bernoulli => 1,
            HyperModel::PoissonMulti => zero_truncated_poisson(lambda, rng),
        };
        for _ in 0..copies {
            out.push(t.to_vec());
        }
    };
    match &h.entries {
        HyperEntries::Sparse(map) => {
            for (t, &v) in map {
                let lambda = rate(t.len(), v);
                if rng.random::<f64>() < presence(lambda) {
                    push(t, lambda, rng);
                }
            }
        }
        HyperEntries::Typed { types, kernel } => {
            let mut groups = vec![Vec::new(); kernel.num_types()];
            for (v, &t) in types.iter().enumerate() {
                groups[t].push(v);
            }
            let mut hits = Vec::new();
            for r in 2..=kernel.max_arity() {
                for tuple in type_multisets(kernel.num_types(), r) {
                    let lambda = rate(r, kernel.value(&tuple));
                    hits.clear();
                    block_for(&groups, &tuple).sample(presence(lambda), rng, |t| hits.push(t.to_vec()))?;
                    for t in &hits {
                        push(t, lambda, rng);
                    }
                }
            }
        }
    }
    out.sort_unstable();
    Ok(Hypergraph { n, hyperedges: out })
}

/// Replaces every hyperedge by a clique; repeated pairs collapse.
pub fn clique_projection(h: &Hypergraph) -> SparseGraph {
    let mut pairs = Vec::new();
    for e in &h.hyperedges {
        for a in 0..e.len() {
            for b in a + 1..e.len() {
                pairs.push((e[a], e[b]));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    SparseGraph::from_canonical(h.n, pairs, false)
}

/// Replaces every hyperedge by one of its pairs, chosen uniformly.
pub fn one_edge_projection<R: Rng + ?Sized>(h: &Hypergraph, rng: &mut R) -> SparseGraph {
    let pairs = h
        .hyperedges
        .iter()
        .map(|e| {
            let r = e.len();
            let mut idx = rng.random_range(0..r * (r - 1) / 2);
            let mut a = 0;
            while idx >= r - 1 - a {
                idx -= r - 1 - a;
                a += 1;
            }
            (e[a], e[a + 1 + idx])
        })
        .collect();
    SparseGraph::from_canonical(h.n, pairs, true)
}

/// Offspring options of a type-`i` particle: hyperedges with the types of
/// their other members, each at rate `r k_r(i, t_2, ..) prod mu_t`.
fn offspring_table(k: &HyperStepKernel) -> Vec<Vec<(f64, Vec<usize>)>> {
    let m = k.num_types();
    (0..m)
        .map(|i| {
            let mut opts = Vec::new();
            for r in 2..=k.max_arity() {
                let w = mass_products(&k.masses, r - 1);
                let arr = &k.arrays[r - 2];
                let mut rest = vec![0; r - 1];
                for (idx, &mu) in w.iter().enumerate() {
                    let v = arr[i * w.len() + idx];
                    if v > 0.0 {
                        decode_tuple(idx, m, &mut rest);
                        opts.push((r as f64 * v * mu, rest.clone()));
                    }
                }
            }
            opts
        })
        .collect()
}

/// Compound Poisson branching process: a type-`i` particle lies in
/// `Poisson(r lambda_r(i))` hyperedges of each arity `r`, the other members'
/// types drawn proportionally to `k_r(i, ...) prod mu`, and each hyperedge
/// contributes its `r - 1` other members as children.
pub fn simulate_hyper_gw<R: Rng + ?Sized>(
    k: &HyperStepKernel,
    root: RootType,
    pop_cap: u64,
    gen_cap: u64,
    rng: &mut R,
) -> Result<GwOutcome> {
    let table = offspring_table(k);
    run_hyper_gw(k, &table, root, pop_cap, gen_cap, rng)
}

fn run_hyper_gw<R: Rng + ?Sized>(
    k: &HyperStepKernel,
    table: &[Vec<(f64, Vec<usize>)>],
    root: RootType,
    pop_cap: u64,
    gen_cap: u64,
    rng: &mut R,
) -> Result<GwOutcome> {
    if pop_cap == 0 || gen_cap == 0 {
        return Err(Error::InvalidArgument("caps must be at least 1".into()));
    }
    if k.is_signed() {
        return Err(Error::InvalidKernel("branching needs a nonnegative hyperkernel".into()));
    }
    let m = k.num_types();
    let root = match root {
        RootType::Fixed(i) if i < m => i,
        RootType::Fixed(i) => return Err(Error::InvalidArgument(format!("root type {i} out of range"))),
        RootType::Random => draw_type(k.masses(), rng),
    };
    let mut z = vec![0u64; m];
    z[root] = 1;
    let (mut total, mut generations) = (1u64, 0u64);
    loop {
        if total > pop_cap || generations >= gen_cap {
            return Ok(GwOutcome::CapReached { total, generations });
        }
        let mut next = vec![0u64; m];
        let mut born = 0u64;
        for i in 0..m {
            if z[i] == 0 {
                continue;
            }
            for (rate, kids) in &table[i] {
                let edges = Poisson::new(z[i] as f64 * rate).expect("positive rate").sample(rng) as u64;
                if edges > 0 {
                    for &t in kids {
                        next[t] += edges;
                    }
                    born += edges * kids.len() as u64;
                }
            }
        }
        if born == 0 {
            return Ok(GwOutcome::Extinct(total));
        }
        total += born;
        generations += 1;
        z = next;
    }
}

/// Survival frequency of the compound process from a mu-random root.
pub fn hyper_survival_mc(k: &HyperStepKernel, reps: usize, pop_cap: u64, root: RngStream) -> Result<McEstimate> {
    let table = offspring_table(k);
    count_survivors(reps, root, |rng| run_hyper_gw(k, &table, RootType::Random, pop_cap, u64::MAX, rng))
}

/// Survival probabilities of the compound process: the largest solution of
/// `f_i = 1 - exp(-sum rate (1 - prod_children (1 - f_c)))`, iterated down
/// from `f = 1`. Zero when the edge kernel's operator has norm at most 1.
pub fn hyper_survival_fixed_point(k: &HyperStepKernel, tol: f64, max_iter: usize) -> Result<FixedPointResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let m = k.num_types();
    if operator_norm(&edge_kernel(k)?, DEFAULT_TOL.min(tol), DEFAULT_MAX_ITER)? <= 1.0 + CRITICAL_SLACK {
        return Ok(FixedPointResult { rho_by_type: vec![0.0; m], rho: 0.0, iterations: 0, residual: 0.0 });
    }
    let table = offspring_table(k);
    let mut f = vec![1.0; m];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let next: Vec<f64> = (0..m)
            .map(|i| {
                let s: f64 = table[i]
                    .iter()
                    .map(|(rate, kids)| rate * (1.0 - kids.iter().map(|&c| 1.0 - f[c]).product::<f64>()))
                    .sum();
                (-(-s).exp_m1()).min(f[i])
            })
            .collect();
        residual = f.iter().zip(&next).map(|(a, b)| a - b).fold(0.0, f64::max);
        f = next;
        if residual < tol {
            let rho = f.iter().zip(k.masses()).map(|(a, b)| a * b).sum();
            return Ok(FixedPointResult { rho_by_type: f, rho, iterations: iter, residual });
        }
    }
    Err(Error::NoConvergence { what: "hyper survival fixed point", iterations: max_iter, residual, last: f })
}
