//! Finite-type kernels, weight matrices and the integral operator.
//!
//! A [`StepKernel`] is a symmetric function on `[m] x [m]` together with a
//! probability measure on the types. Continuous kernels are handled by
//! discretizing them on a grid chosen by the caller. A [`WeightMatrix`] holds
//! the scaled edge intensities `a_ij` of an `n`-vertex model; its step kernel
//! (`as_kernel`) puts mass `1/n` on every vertex.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Default relative tolerance for iterative solvers.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default iteration cap for iterative solvers.
pub const DEFAULT_MAX_ITER: usize = 100_000;

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    masses: Vec<f64>,
    /// Row-major `m x m`.
    values: Vec<f64>,
    signed: bool,
}

impl StepKernel {
    /// Nonnegative symmetric kernel. `values` is given row by row.
    pub fn new(masses: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(masses, values, false)
    }

    /// Kernel whose values may be negative, e.g. the difference of two kernels.
    pub fn new_signed(masses: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(masses, values, true)
    }

    /// `m` equiprobable types.
    pub fn uniform(values: Vec<Vec<f64>>) -> Result<Self> {
        let m = values.len();
        Self::new(vec![1.0 / m as f64; m], values)
    }

    /// Constant kernel on a single type.
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![vec![c]])
    }

    fn build(masses: Vec<f64>, rows: Vec<Vec<f64>>, signed: bool) -> Result<Self> {
        let m = masses.len();
        if m == 0 {
            return Err(Error::InvalidKernel("no types".into()));
        }
        if rows.len() != m {
            return Err(Error::DimensionMismatch { expected: m, actual: rows.len() });
        }
        let mut values = Vec::with_capacity(m * m);
        for row in &rows {
            if row.len() != m {
                return Err(Error::DimensionMismatch { expected: m, actual: row.len() });
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(masses, values, signed)
    }

    pub(crate) fn from_flat(masses: Vec<f64>, values: Vec<f64>, signed: bool) -> Result<Self> {
        let m = masses.len();
        if m == 0 {
            return Err(Error::InvalidKernel("no types".into()));
        }
        if values.len() != m * m {
            return Err(Error::DimensionMismatch { expected: m * m, actual: values.len() });
        }
        if let Some(i) = masses.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidKernel(format!("type {i} has mass {} (must be > 0)", masses[i])));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidKernel(format!("masses sum to {total}, not 1")));
        }
        for i in 0..m {
            for j in 0..m {
                let v = values[i * m + j];
                if !v.is_finite() {
                    return Err(Error::InvalidKernel(format!("value ({i},{j}) is not finite")));
                }
                if !signed && v < 0.0 {
                    return Err(Error::InvalidKernel(format!("value ({i},{j}) = {v} is negative")));
                }
                if v != values[j * m + i] {
                    return Err(Error::InvalidKernel(format!("values not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { masses, values, signed })
    }

    pub fn num_types(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.masses.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.masses.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_types()).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `sum_ij mu_i mu_j k_ij`.
    pub fn integral(&self) -> f64 {
        let m = self.num_types();
        (0..m)
            .map(|i| self.masses[i] * (0..m).map(|j| self.masses[j] * self.value(i, j)).sum::<f64>())
            .sum()
    }

    /// `sum_ij mu_i mu_j |k_ij|`.
    pub fn l1_norm(&self) -> f64 {
        let m = self.num_types();
        (0..m)
            .map(|i| self.masses[i] * (0..m).map(|j| self.masses[j] * self.value(i, j).abs()).sum::<f64>())
            .sum()
    }

    /// `self - other` on a common partition (masses must agree exactly).
    pub fn difference(&self, other: &StepKernel) -> Result<StepKernel> {
        self.combine(other, -1.0)
    }

    /// `self + eps * other` on a common partition; the result is marked signed.
    pub fn add_scaled(&self, other: &StepKernel, eps: f64) -> Result<StepKernel> {
        self.combine(other, eps)
    }

    fn combine(&self, other: &StepKernel, eps: f64) -> Result<StepKernel> {
        if self.masses != other.masses {
            return Err(Error::InvalidKernel("kernels are not on a common partition".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + eps * b).collect();
        Ok(StepKernel { masses: self.masses.clone(), values, signed: true })
    }

    /// Relabels types: type `i` of the result is type `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<StepKernel> {
        let m = self.num_types();
        if perm.len() != m {
            return Err(Error::DimensionMismatch { expected: m, actual: perm.len() });
        }
        let masses = perm.iter().map(|&p| self.masses[p]).collect();
        let mut values = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                values[i * m + j] = self.value(perm[i], perm[j]);
            }
        }
        Ok(StepKernel { masses, values, signed: self.signed })
    }

    /// Drops the signed marker if every value is nonnegative.
    pub fn into_nonnegative(self) -> Result<StepKernel> {
        if let Some(v) = self.values.iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidKernel(format!("negative value {v}")));
        }
        Ok(StepKernel { signed: false, ..self })
    }

    fn map_values(&self, f: impl Fn(f64) -> f64) -> StepKernel {
        StepKernel {
            masses: self.masses.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            signed: self.signed,
        }
    }
}

/// Per-type expected degree `lambda_i = sum_j mu_j k_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal(pub Vec<f64>);

impl Marginal {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

pub fn marginal(k: &StepKernel) -> Marginal {
    let m = k.num_types();
    Marginal(
        (0..m)
            .map(|i| k.row(i).iter().zip(k.masses()).map(|(v, mu)| mu * v).sum())
            .collect(),
    )
}

/// `(T f)_i = sum_j k_ij f_j mu_j`.
pub fn apply_t(k: &StepKernel, f: &[f64]) -> Result<Vec<f64>> {
    let m = k.num_types();
    if f.len() != m {
        return Err(Error::DimensionMismatch { expected: m, actual: f.len() });
    }
    Ok(apply_t_unchecked(k, f))
}

pub(crate) fn apply_t_unchecked(k: &StepKernel, f: &[f64]) -> Vec<f64> {
    let mu = k.masses();
    (0..k.num_types())
        .map(|i| k.row(i).iter().zip(f).zip(mu).map(|((v, fj), m)| v * fj * m).sum())
        .collect()
}

/// Norm of `T_k` on `L^2(mu)`.
///
/// Power iteration on the symmetric matrix `S_ij = sqrt(mu_i mu_j) k_ij`,
/// which is similar to `T` and so has the same spectrum; the estimate is
/// `|S x| / |x|`, which is nondecreasing in the iteration and converges to the
/// spectral radius even when `-|T|` is also an eigenvalue (bipartite kernels).
/// The start vector `sqrt(mu)` corresponds to `f = 1`.
pub fn operator_norm(k: &StepKernel, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let m = k.num_types();
    let sq: Vec<f64> = k.masses().iter().map(|x| x.sqrt()).collect();
    let s: Vec<f64> = (0..m * m).map(|idx| sq[idx / m] * sq[idx % m] * k.values[idx]).collect();
    let mut x: Vec<f64> = sq.clone();
    let mut y = vec![0.0; m];
    let mut estimate = 0.0;
    for iter in 0..max_iter {
        for i in 0..m {
            y[i] = s[i * m..(i + 1) * m].iter().zip(&x).map(|(a, b)| a * b).sum();
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        // x is kept at unit length, so |Sx| is the estimate
        let change = (norm - estimate).abs();
        estimate = norm;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        if iter > 0 && change <= tol * norm {
            return Ok(estimate);
        }
    }
    Err(Error::NoConvergence {
        what: "power iteration",
        iterations: max_iter,
        residual: estimate,
        last: x,
    })
}

/// Pointwise minimum of `k` and `cap`.
pub fn truncate(k: &StepKernel, cap: f64) -> StepKernel {
    k.map_values(|v| v.min(cap))
}

pub fn scale(k: &StepKernel, c: f64) -> StepKernel {
    k.map_values(|v| v * c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrreducibleBlock {
    /// Type indices of `k`, ascending.
    pub types: Vec<usize>,
    /// Total mass of the block in the original kernel.
    pub mass: f64,
    /// The restriction, with masses renormalized to 1 and values multiplied by
    /// `mass`; its integral operator matches `T_k` restricted to the block.
    pub kernel: StepKernel,
    /// True when the kernel vanishes on the whole block (an isolated type).
    pub null: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrreducibleDecomposition {
    pub blocks: Vec<IrreducibleBlock>,
}

impl IrreducibleDecomposition {
    pub fn is_irreducible(&self) -> bool {
        self.blocks.len() == 1
    }
}

/// Connected components of the graph on types with an edge `ij` whenever
/// `k_ij > 0`.
pub fn decompose_irreducible(k: &StepKernel) -> IrreducibleDecomposition {
    let m = k.num_types();
    let mut label = vec![usize::MAX; m];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for start in 0..m {
        if label[start] != usize::MAX {
            continue;
        }
        let id = groups.len();
        label[start] = id;
        let mut stack = vec![start];
        let mut members = vec![];
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in 0..m {
                if label[j] == usize::MAX && k.value(i, j) > 0.0 {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    let mut blocks: Vec<IrreducibleBlock> = groups
        .into_iter()
        .map(|types| {
            let mass: f64 = types.iter().map(|&i| k.masses()[i]).sum();
            let masses: Vec<f64> = types.iter().map(|&i| k.masses()[i] / mass).collect();
            let values: Vec<f64> = types
                .iter()
                .flat_map(|&i| types.iter().map(move |&j| (i, j)))
                .map(|(i, j)| k.value(i, j) * mass)
                .collect();
            let null = values.iter().all(|v| *v == 0.0);
            let kernel = StepKernel::from_flat(renormalize(masses), values, k.is_signed())
                .expect("restriction of a valid kernel is valid");
            IrreducibleBlock { types, mass, kernel, null }
        })
        .collect();
    blocks.sort_by(|a, b| b.mass.total_cmp(&a.mass).then(a.types[0].cmp(&b.types[0])));
    IrreducibleDecomposition { blocks }
}

// Division by the block mass can leave the sum a few ulps off 1.
fn renormalize(mut masses: Vec<f64>) -> Vec<f64> {
    let total: f64 = masses.iter().sum();
    for x in &mut masses {
        *x /= total;
    }
    masses
}

/// Storage for the entries of a [`WeightMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub enum Entries {
    /// Row-major `n x n`.
    Dense(Vec<f64>),
    /// Entries `(i, j)` with `i <= j`; absent pairs are 0.
    Sparse(BTreeMap<(usize, usize), f64>),
    /// `a_ij = values[types[i]][types[j]]` for `i != j`, zero diagonal.
    /// This is what iid type sampling produces, and it lets samplers work
    /// block by block instead of pair by pair.
    Typed {
        types: Vec<usize>,
        m: usize,
        values: Vec<f64>,
    },
}

/// Symmetric nonnegative `n x n` matrix of scaled edge intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    entries: Entries,
}

/// Mass removed by [`eliminate_large_entries`], counted over ordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Removed {
    pub count: u64,
    pub sum: f64,
}

impl WeightMatrix {
    pub fn dense(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut flat = Vec::with_capacity(n * n);
        for row in &rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: row.len() });
            }
            flat.extend_from_slice(row);
        }
        for i in 0..n {
            for j in 0..n {
                let v = flat[i * n + j];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidMatrix(format!("entry ({i},{j}) = {v} must be finite and >= 0")));
                }
                if v != flat[j * n + i] {
                    return Err(Error::InvalidMatrix(format!("not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { n, entries: Entries::Dense(flat) })
    }

    /// Coordinate list; `(i, j)` and `(j, i)` name the same entry.
    pub fn from_triples(n: usize, triples: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, j, a) in triples {
            if i >= n || j >= n {
                return Err(Error::InvalidMatrix(format!("index ({i},{j}) out of range for n = {n}")));
            }
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::InvalidMatrix(format!("entry ({i},{j}) = {a} must be finite and >= 0")));
            }
            let key = (i.min(j), i.max(j));
            if let Some(prev) = map.insert(key, a) {
                if prev != a {
                    return Err(Error::InvalidMatrix(format!("conflicting values for ({i},{j})")));
                }
            }
        }
        map.retain(|_, a| *a != 0.0);
        Ok(Self { n, entries: Entries::Sparse(map) })
    }

    /// `a_ij = c` off the diagonal.
    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::typed(vec![0; n], &StepKernel::constant(c)?)
    }

    /// `a_ij = k[types[i]][types[j]]` off the diagonal.
    pub fn typed(types: Vec<usize>, k: &StepKernel) -> Result<Self> {
        if k.is_signed() {
            return Err(Error::InvalidMatrix("weight matrices must be nonnegative".into()));
        }
        let m = k.num_types();
        if let Some(t) = types.iter().find(|&&t| t >= m) {
            return Err(Error::InvalidMatrix(format!("type {t} out of range for {m} types")));
        }
        Ok(Self {
            n: types.len(),
            entries: Entries::Typed { types, m, values: k.values.clone() },
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &Entries {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.entries {
            Entries::Dense(v) => v[i * self.n + j],
            Entries::Sparse(map) => map.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0),
            Entries::Typed { types, m, values } => {
                if i == j {
                    0.0
                } else {
                    values[types[i] * m + types[j]]
                }
            }
        }
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn max_entry(&self) -> f64 {
        match &self.entries {
            Entries::Dense(v) => v.iter().copied().fold(0.0, f64::max),
            Entries::Sparse(map) => map.values().copied().fold(0.0, f64::max),
            Entries::Typed { types, m, values } => {
                let counts = type_counts(types, *m);
                let mut best = 0.0f64;
                for a in 0..*m {
                    for b in 0..*m {
                        let present = if a == b { counts[a] >= 2 } else { counts[a] > 0 && counts[b] > 0 };
                        if present {
                            best = best.max(values[a * m + b]);
                        }
                    }
                }
                best
            }
        }
    }

    /// The step kernel `kappa_A`: `n` types of mass `1/n`, values `a_ij`.
    pub fn as_kernel(&self) -> StepKernel {
        let n = self.n;
        let values: Vec<f64> = (0..n * n).map(|idx| self.get(idx / n, idx % n)).collect();
        StepKernel { masses: vec![1.0 / n as f64; n], values, signed: false }
    }

    /// For typed matrices: the type-level kernel with empirical type
    /// frequencies as masses (types that do not occur are dropped). It is a
    /// rearrangement of `as_kernel` apart from the zero diagonal.
    pub fn type_kernel(&self) -> Option<StepKernel> {
        let Entries::Typed { types, m, values } = &self.entries else {
            return None;
        };
        let counts = type_counts(types, *m);
        let present: Vec<usize> = (0..*m).filter(|&t| counts[t] > 0).collect();
        let masses = renormalize(present.iter().map(|&t| counts[t] as f64 / self.n as f64).collect());
        let vals = present
            .iter()
            .flat_map(|&a| present.iter().map(move |&b| values[a * m + b]))
            .collect();
        Some(StepKernel { masses, values: vals, signed: false })
    }

    /// Applies `f` to every stored value.
    pub(crate) fn map_entries(&self, f: impl Fn(f64) -> f64) -> WeightMatrix {
        let entries = match &self.entries {
            Entries::Dense(v) => Entries::Dense(v.iter().map(|&a| f(a)).collect()),
            Entries::Sparse(map) => {
                Entries::Sparse(map.iter().map(|(&k, &a)| (k, f(a))).filter(|(_, a)| *a != 0.0).collect())
            }
            Entries::Typed { types, m, values } => Entries::Typed {
                types: types.clone(),
                m: *m,
                values: values.iter().map(|&a| f(a)).collect(),
            },
        };
        WeightMatrix { n: self.n, entries }
    }

    pub fn scaled(&self, c: f64) -> WeightMatrix {
        self.map_entries(|a| a * c)
    }
}

pub(crate) fn type_counts(types: &[usize], m: usize) -> Vec<usize> {
    let mut counts = vec![0usize; m];
    for &t in types {
        counts[t] += 1;
    }
    counts
}

/// Zeroes every entry above `cap` and the whole diagonal.
pub fn eliminate_large_entries(a: &WeightMatrix, cap: f64) -> Result<(WeightMatrix, Removed)> {
    if !(cap > 0.0) {
        return Err(Error::InvalidArgument(format!("cap must be positive, got {cap}")));
    }
    let n = a.n;
    let mut removed = Removed::default();
    let entries = match &a.entries {
        Entries::Dense(v) => {
            let mut out = v.clone();
            for i in 0..n {
                for j in 0..n {
                    let x = v[i * n + j];
                    if i == j || x > cap {
                        if x != 0.0 {
                            removed.count += 1;
                            removed.sum += x;
                        }
                        out[i * n + j] = 0.0;
                    }
                }
            }
            Entries::Dense(out)
        }
        Entries::Sparse(map) => {
            let mut out = BTreeMap::new();
            for (&(i, j), &x) in map {
                if i == j || x > cap {
                    let mult = if i == j { 1 } else { 2 };
                    removed.count += mult;
                    removed.sum += x * mult as f64;
                } else {
                    out.insert((i, j), x);
                }
            }
            Entries::Sparse(out)
        }
        Entries::Typed { types, m, values } => {
            let counts = type_counts(types, *m);
            let mut out = values.clone();
            for s in 0..*m {
                for t in 0..*m {
                    let x = values[s * m + t];
                    if x > cap {
                        let pairs = if s == t {
                            counts[s] as u64 * (counts[s] as u64).saturating_sub(1)
                        } else {
                            counts[s] as u64 * counts[t] as u64
                        };
                        removed.count += pairs;
                        removed.sum += x * pairs as f64;
                        out[s * m + t] = 0.0;
                    }
                }
            }
            Entries::Typed { types: types.clone(), m: *m, values: out }
        }
    };
    Ok((WeightMatrix { n, entries }, removed))
}
