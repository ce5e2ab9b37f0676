//! Multi-type Poisson Galton–Watson processes.
//!
//! A particle of type `i` has `Poisson(k_ij mu_j)` children of type `j`,
//! independently over `j`. The survival probabilities `rho_i` form the
//! largest solution of `f = 1 - exp(-T f)`, and `rho = sum_i mu_i rho_i`.

mod trees;

pub use trees::{t_isol, trees, LabelledTree, MAX_TREE_ORDER};

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::cutnorm::cutnorm_sets_exact;
use crate::error::{Error, Result};
use crate::kernel::{apply_t_unchecked, operator_norm, scale, StepKernel, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::rng::{map_replicas, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub rho_by_type: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Sup-norm of the last update.
    pub residual: f64,
}

/// Iterates of `f <- 1 - exp(-T f)` from `f = 1`.
///
/// The sequence is pointwise nonincreasing and converges to the survival
/// vector. Each iterate is clamped to the previous one so that rounding
/// cannot break monotonicity.
pub struct SurvivalIteration<'a> {
    kernel: &'a StepKernel,
    f: Vec<f64>,
}

impl<'a> SurvivalIteration<'a> {
    pub fn new(kernel: &'a StepKernel) -> Self {
        Self { kernel, f: vec![1.0; kernel.num_types()] }
    }

    pub fn current(&self) -> &[f64] {
        &self.f
    }

    /// Advances one step and returns the sup-norm change.
    pub fn step(&mut self) -> f64 {
        let tf = apply_t_unchecked(self.kernel, &self.f);
        let mut change: f64 = 0.0;
        for (fi, t) in self.f.iter_mut().zip(tf) {
            let next = (-(-t).exp_m1()).min(*fi);
            change = change.max(*fi - next);
            *fi = next;
        }
        change
    }
}

/// Kernels with `|T| <= 1 + CRITICAL_SLACK` are treated as critical. Power
/// iteration cannot resolve the norm more finely, and above 1 the survival
/// probability grows like `|T| - 1`, so the zero answer is off by about as much.
pub const CRITICAL_SLACK: f64 = 1e-9;

/// Survival probabilities by fixed-point iteration from `f = 1`.
///
/// When `|T| <= 1` (up to [`CRITICAL_SLACK`]) the only solution is `f = 0` and it is returned without
/// iterating. Otherwise iteration stops once the sup-norm change drops below
/// `tol`; near criticality convergence is slow and `max_iter` exhaustion is
/// reported as an error carrying the last iterate.
pub fn survival_fixed_point(k: &StepKernel, tol: f64, max_iter: usize) -> Result<FixedPointResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let m = k.num_types();
    let norm = operator_norm(k, DEFAULT_TOL.min(tol), DEFAULT_MAX_ITER)?;
    if norm <= 1.0 + CRITICAL_SLACK {
        return Ok(FixedPointResult { rho_by_type: vec![0.0; m], rho: 0.0, iterations: 0, residual: 0.0 });
    }
    let mut it = SurvivalIteration::new(k);
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        residual = it.step();
        if residual < tol {
            let rho = it.f.iter().zip(k.masses()).map(|(f, mu)| f * mu).sum();
            return Ok(FixedPointResult { rho_by_type: it.f, rho, iterations: iter, residual });
        }
    }
    Err(Error::NoConvergence { what: "survival fixed point", iterations: max_iter, residual, last: it.f })
}

/// Survival probability with default tolerances.
pub fn survival(k: &StepKernel) -> Result<f64> {
    Ok(survival_fixed_point(k, DEFAULT_TOL, DEFAULT_MAX_ITER)?.rho)
}

/// `max(0, (|T| - 1) / sup k)`, a lower bound on `rho(k)`.
pub fn survival_lower_bound(k: &StepKernel) -> Result<f64> {
    let sup = k.max_value();
    if sup == 0.0 {
        return Ok(0.0);
    }
    let norm = operator_norm(k, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    Ok(((norm - 1.0) / sup).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootType {
    Fixed(usize),
    /// Drawn from the kernel's masses.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GwOutcome {
    /// Died out with this many particles in total.
    Extinct(u64),
    /// Stopped because the population passed `pop_cap` or the generation
    /// count reached `gen_cap`; treated as survival.
    CapReached { total: u64, generations: u64 },
}

impl GwOutcome {
    pub fn survived(&self) -> bool {
        matches!(self, GwOutcome::CapReached { .. })
    }
}

/// Runs one process generation by generation. Only per-type counts are
/// tracked: the type-`j` offspring of a whole generation `z` is
/// `Poisson(sum_i z_i k_ij mu_j)`.
pub fn simulate_gw<R: Rng + ?Sized>(
    k: &StepKernel,
    root: RootType,
    pop_cap: u64,
    gen_cap: u64,
    rng: &mut R,
) -> Result<GwOutcome> {
    if pop_cap == 0 || gen_cap == 0 {
        return Err(Error::InvalidArgument("caps must be at least 1".into()));
    }
    let m = k.num_types();
    let root = match root {
        RootType::Fixed(i) if i < m => i,
        RootType::Fixed(i) => return Err(Error::InvalidArgument(format!("root type {i} out of range"))),
        RootType::Random => draw_type(k.masses(), rng),
    };
    let mut z = vec![0u64; m];
    z[root] = 1;
    let mut total = 1u64;
    let mut generations = 0u64;
    loop {
        if total > pop_cap || generations >= gen_cap {
            return Ok(GwOutcome::CapReached { total, generations });
        }
        let mut next = vec![0u64; m];
        let mut born = 0u64;
        for (j, slot) in next.iter_mut().enumerate() {
            let rate: f64 = (0..m).map(|i| z[i] as f64 * k.value(i, j)).sum::<f64>() * k.masses()[j];
            if rate > 0.0 {
                *slot = Poisson::new(rate).expect("positive rate").sample(rng) as u64;
                born += *slot;
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

/// Monte Carlo estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub reps: usize,
}

impl McEstimate {
    pub(crate) fn from_hits(hits: usize, reps: usize) -> Self {
        let p = hits as f64 / reps as f64;
        Self { mean: p, std_error: (p * (1.0 - p) / reps as f64).sqrt(), reps }
    }
}

/// Fraction of `reps` processes from a mu-random root whose total progeny
/// passes `pop_cap`.
pub fn survival_mc(k: &StepKernel, reps: usize, pop_cap: u64, root: RngStream) -> Result<McEstimate> {
    count_survivors(reps, root, |rng| simulate_gw(k, RootType::Random, pop_cap, u64::MAX, rng))
}

pub(crate) fn count_survivors<F>(reps: usize, root: RngStream, run: F) -> Result<McEstimate>
where
    F: Fn(&mut crate::rng::StreamRng) -> Result<GwOutcome> + Sync,
{
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    let chunks = reps.div_ceil(MC_CHUNK);
    let partial = map_replicas(root, chunks, |c, rng| -> Result<usize> {
        let count = MC_CHUNK.min(reps - c * MC_CHUNK);
        let mut hits = 0;
        for _ in 0..count {
            if run(rng)?.survived() {
                hits += 1;
            }
        }
        Ok(hits)
    });
    let mut hits = 0;
    for h in partial {
        hits += h?;
    }
    Ok(McEstimate::from_hits(hits, reps))
}

pub(crate) fn draw_type<R: Rng + ?Sized>(masses: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    for (i, &w) in masses.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    masses.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawMethod {
    MonteCarlo { reps: usize },
    TreeSum,
}

/// Law of the total progeny from a mu-random root.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationLaw {
    /// `probs[k - 1] = P(total = k)` for `k = 1..=k_max`.
    pub probs: Vec<f64>,
    /// `1 - sum(probs)`: larger or infinite populations.
    pub tail: f64,
    pub method: LawMethod,
}

impl PopulationLaw {
    pub fn k_max(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.probs.get(k - 1).copied().unwrap_or(0.0)
        }
    }

    /// Binomial standard error of `prob(k)` for Monte Carlo laws; 0 otherwise.
    pub fn standard_error(&self, k: usize) -> f64 {
        match self.method {
            LawMethod::MonteCarlo { reps } => {
                let p = self.prob(k);
                (p * (1.0 - p) / reps as f64).sqrt()
            }
            LawMethod::TreeSum => 0.0,
        }
    }
}

const MC_CHUNK: usize = 4096;

/// Empirical total-progeny law over `reps` runs. Work is split into fixed
/// chunks, each with its own child stream of `root`.
pub fn population_law_mc(k: &StepKernel, k_max: usize, reps: usize, root: RngStream) -> Result<PopulationLaw> {
    if reps == 0 || k_max == 0 {
        return Err(Error::InvalidArgument("reps and k_max must be at least 1".into()));
    }
    let chunks = reps.div_ceil(MC_CHUNK);
    let partial = map_replicas(root, chunks, |c, rng| -> Result<Vec<u64>> {
        let count = MC_CHUNK.min(reps - c * MC_CHUNK);
        let mut hist = vec![0u64; k_max];
        for _ in 0..count {
            if let GwOutcome::Extinct(total) = simulate_gw(k, RootType::Random, k_max as u64, u64::MAX, rng)? {
                hist[total as usize - 1] += 1;
            }
        }
        Ok(hist)
    });
    let mut hist = vec![0u64; k_max];
    for h in partial {
        for (a, b) in hist.iter_mut().zip(h?) {
            *a += b;
        }
    }
    let probs: Vec<f64> = hist.iter().map(|&c| c as f64 / reps as f64).collect();
    let tail = 1.0 - probs.iter().sum::<f64>();
    Ok(PopulationLaw { probs, tail, method: LawMethod::MonteCarlo { reps } })
}

/// `rho_j = j sum_T t_isol(T, k) / aut(T)` over trees `T` on `j` vertices.
pub fn population_law_treesum(k: &StepKernel, k_max: usize) -> Result<PopulationLaw> {
    if k_max > MAX_TREE_ORDER {
        return Err(Error::BudgetExceeded(format!("tree sums need k_max <= {MAX_TREE_ORDER}, got {k_max}")));
    }
    let mut probs = Vec::with_capacity(k_max);
    for order in 1..=k_max {
        let sum: f64 = trees(order)?.iter().map(|t| t_isol(t, k) / t.aut() as f64).sum();
        probs.push(order as f64 * sum);
    }
    let tail = 1.0 - probs.iter().sum::<f64>();
    Ok(PopulationLaw { probs, tail, method: LawMethod::TreeSum })
}

/// Total-progeny law of the single-type process with mean `c`:
/// `exp(-c k) (c k)^(k-1) / k!`.
pub fn borel_pmf(c: f64, k: usize) -> f64 {
    let kf = k as f64;
    let log_fact: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    if c == 0.0 {
        return if k == 1 { 1.0 } else { 0.0 };
    }
    (-c * kf + (kf - 1.0) * (c * kf).ln() - log_fact).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityRow {
    pub epsilon: f64,
    /// Set-version cut norm of `epsilon * P`.
    pub cut_norm: f64,
    /// `|rho(k + epsilon P) - rho(k)|`.
    pub delta_rho: f64,
}

/// Tabulates how `rho` moves under perturbations of shrinking cut norm.
pub fn rho_continuity_probe(k: &StepKernel, perturbation: &StepKernel, scales: &[f64]) -> Result<Vec<ContinuityRow>> {
    let base = survival(k)?;
    scales
        .iter()
        .map(|&eps| {
            let moved = k
                .add_scaled(perturbation, eps)?
                .into_nonnegative()
                .map_err(|_| Error::NegativePerturbation { epsilon: eps })?;
            let cut = cutnorm_sets_exact(&scale(perturbation, eps))?.value;
            let delta_rho = (survival(&moved)? - base).abs();
            Ok(ContinuityRow { epsilon: eps, cut_norm: cut, delta_rho })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Solves rho = 1 - exp(-c rho) on (0, 1] by bisection.
    fn scalar_rho(c: f64) -> f64 {
        if c <= 1.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (1e-12, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 - (-c * mid).exp() > mid {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn bisection_oracle_value() {
        assert!((scalar_rho(2.0) - 0.796_812_130_0).abs() < 1e-10);
    }

    #[test]
    fn fixed_point_examples() {
        let r = survival_fixed_point(&StepKernel::constant(0.5).unwrap(), 1e-10, 100_000).unwrap();
        assert_eq!(r.rho, 0.0);
        let r = survival_fixed_point(&StepKernel::constant(2.0).unwrap(), 1e-12, 100_000).unwrap();
        assert!((r.rho - scalar_rho(2.0)).abs() < 1e-10);
        assert!(r.residual < 1e-12);
        let bip = StepKernel::uniform(vec![vec![0.0, 4.0], vec![4.0, 0.0]]).unwrap();
        let r = survival_fixed_point(&bip, 1e-12, 100_000).unwrap();
        for x in &r.rho_by_type {
            assert!((x - scalar_rho(2.0)).abs() < 1e-10);
        }
        assert!((r.rho - r.rho_by_type.iter().sum::<f64>() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn iterates_are_monotone() {
        let k = StepKernel::new(vec![0.3, 0.7], vec![vec![3.0, 0.5], vec![0.5, 1.2]]).unwrap();
        let mut it = SurvivalIteration::new(&k);
        let mut prev = it.current().to_vec();
        for _ in 0..200 {
            it.step();
            assert!(it.current().iter().zip(&prev).all(|(a, b)| a <= b));
            prev = it.current().to_vec();
        }
    }

    #[test]
    fn near_critical_reports_nonconvergence() {
        let k = StepKernel::constant(1.0001).unwrap();
        match survival_fixed_point(&k, 1e-14, 50) {
            Err(Error::NoConvergence { last, iterations, .. }) => {
                assert_eq!(iterations, 50);
                assert_eq!(last.len(), 1);
            }
            other => panic!("{other:?}"),
        }
        assert!(survival_fixed_point(&k, 0.0, 50).is_err());
    }

    #[test]
    fn lower_bound_examples() {
        let lb = survival_lower_bound(&StepKernel::constant(2.0).unwrap()).unwrap();
        assert!((lb - 0.5).abs() < 1e-12);
        assert!(lb <= scalar_rho(2.0));
        assert_eq!(survival_lower_bound(&StepKernel::constant(1.0).unwrap()).unwrap(), 0.0);
        assert_eq!(survival_lower_bound(&StepKernel::constant(0.5).unwrap()).unwrap(), 0.0);
        assert_eq!(survival_lower_bound(&StepKernel::constant(0.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn gw_zero_kernel_dies_at_once() {
        let mut rng = RngStream::new(0, 0).rng();
        let z = StepKernel::uniform(vec![vec![0.0; 2]; 2]).unwrap();
        for _ in 0..100 {
            assert_eq!(simulate_gw(&z, RootType::Random, 10, 10, &mut rng).unwrap(), GwOutcome::Extinct(1));
        }
        assert!(simulate_gw(&z, RootType::Fixed(2), 10, 10, &mut rng).is_err());
        assert!(simulate_gw(&z, RootType::Fixed(0), 0, 10, &mut rng).is_err());
    }

    #[test]
    fn gw_critical_mostly_dies() {
        let mut rng = RngStream::new(1, 0).rng();
        let k = StepKernel::constant(1.0).unwrap();
        let reps = 20_000;
        let extinct = (0..reps)
            .filter(|_| !simulate_gw(&k, RootType::Random, 10_000, u64::MAX, &mut rng).unwrap().survived())
            .count();
        assert!(extinct as f64 / reps as f64 >= 0.95);
    }

    #[test]
    fn gw_generation_cap() {
        let mut rng = RngStream::new(2, 0).rng();
        let k = StepKernel::constant(5.0).unwrap();
        let out = simulate_gw(&k, RootType::Fixed(0), u64::MAX, 3, &mut rng).unwrap();
        if let GwOutcome::CapReached { generations, .. } = out {
            assert_eq!(generations, 3);
        }
    }

    #[test]
    fn mc_survival_matches_fixed_point() {
        let k = StepKernel::constant(2.0).unwrap();
        let est = survival_mc(&k, 20_000, 2_000, RngStream::new(9, 0)).unwrap();
        assert!((est.mean - scalar_rho(2.0)).abs() < 4.0 * est.std_error + 0.005, "{est:?}");
        let again = survival_mc(&k, 20_000, 2_000, RngStream::new(9, 0)).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn borel_law() {
        assert!((borel_pmf(1.0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((borel_pmf(1.0, 2) - (-2.0f64).exp()).abs() < 1e-15);
        assert!((borel_pmf(1.0, 3) - 1.5 * (-3.0f64).exp()).abs() < 1e-15);
        assert_eq!(borel_pmf(0.0, 1), 1.0);
    }

    #[test]
    fn tree_sum_matches_borel() {
        for c in [0.5, 1.0, 2.0] {
            let law = population_law_treesum(&StepKernel::constant(c).unwrap(), 8).unwrap();
            for k in 1..=8 {
                assert!((law.prob(k) - borel_pmf(c, k)).abs() < 1e-10, "c={c} k={k}");
            }
        }
        assert!(population_law_treesum(&StepKernel::constant(1.0).unwrap(), 9).is_err());
    }

    #[test]
    fn zero_kernel_law() {
        let z = StepKernel::constant(0.0).unwrap();
        let mc = population_law_mc(&z, 5, 1000, RngStream::new(3, 0)).unwrap();
        assert_eq!(mc.prob(1), 1.0);
        let ts = population_law_treesum(&z, 5).unwrap();
        assert_eq!(ts.prob(1), 1.0);
        assert_eq!(ts.prob(2), 0.0);
    }

    #[test]
    fn survival_plus_finite_mass_is_one() {
        let k = StepKernel::constant(2.0).unwrap();
        let law = population_law_treesum(&k, 8).unwrap();
        let gap = 1.0 - law.probs.iter().sum::<f64>() - scalar_rho(2.0);
        assert!(gap >= 0.0 && gap <= 0.02, "gap {gap}");
    }

    #[test]
    fn continuity_examples() {
        let k = StepKernel::constant(2.0).unwrap();
        let p = StepKernel::constant(1.0).unwrap();
        let rows = rho_continuity_probe(&k, &p, &[0.0, 0.1]).unwrap();
        assert_eq!((rows[0].cut_norm, rows[0].delta_rho), (0.0, 0.0));
        assert!((rows[1].delta_rho - (scalar_rho(2.1) - scalar_rho(2.0))).abs() < 1e-9);
        assert!(rows[1].delta_rho <= 0.05);
        assert!((rows[1].cut_norm - 0.1).abs() < 1e-15);
        match rho_continuity_probe(&k, &p, &[-3.0]) {
            Err(Error::NegativePerturbation { epsilon }) => assert_eq!(epsilon, -3.0),
            other => panic!("{other:?}"),
        }
    }
}
