//! Three operations for the static page in `www/`. Results come back as flat
//! `Float64Array`s of fixed-width rows so the page can plot them directly.

use irgraph::branching::{borel_pmf, population_law_mc, population_law_treesum, survival, survival_lower_bound};
use irgraph::components::analyze;
use irgraph::graphgen::{sample_bernoulli, sample_iid_types};
use irgraph::kernel::scale;
use irgraph::rng::map_replicas;
use irgraph::{RngStream, StepKernel};
use wasm_bindgen::prelude::*;

/// Largest vertex count the page may request; keeps a click under a second or so.
pub const MAX_N: usize = 200_000;

fn kernel(masses: &[f64], values: &[f64]) -> Result<StepKernel, String> {
    let m = masses.len();
    if values.len() != m * m {
        return Err(format!("{} values for {m} types; expected {}", values.len(), m * m));
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err("masses must be positive".into());
    }
    let masses = masses.iter().map(|x| x / total).collect();
    StepKernel::new(masses, values.chunks(m).map(<[f64]>::to_vec).collect()).map_err(|e| e.to_string())
}

fn grid(c_max: f64, points: usize) -> Result<Vec<f64>, String> {
    if !(c_max > 0.0) || points < 2 {
        return Err("need c_max > 0 and at least 2 points".into());
    }
    Ok((0..points).map(|i| c_max * i as f64 / (points - 1) as f64).collect())
}

/// Rows `[c, rho(c k), lower bound]`.
pub fn rho_curve_rows(masses: &[f64], values: &[f64], c_max: f64, points: usize) -> Result<Vec<f64>, String> {
    let k = kernel(masses, values)?;
    let mut out = Vec::with_capacity(3 * points);
    for c in grid(c_max, points)? {
        let kc = scale(&k, c);
        // next to criticality the iteration may stall; the curve is zero there to plotting accuracy
        let rho = survival(&kc).unwrap_or(0.0);
        out.extend([c, rho, survival_lower_bound(&kc).map_err(|e| e.to_string())?]);
    }
    Ok(out)
}

/// Rows `[c, mean C1/n, min C1/n, max C1/n]` over sampled graphs with iid types.
pub fn giant_rows(
    masses: &[f64],
    values: &[f64],
    n: usize,
    c_max: f64,
    points: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    if !(2..=MAX_N).contains(&n) || replicas == 0 {
        return Err(format!("need 2 <= n <= {MAX_N} and at least one replica"));
    }
    let k = kernel(masses, values)?;
    let root = RngStream::new(seed, 0);
    let mut out = Vec::with_capacity(4 * points);
    for (p, c) in grid(c_max, points)?.into_iter().enumerate() {
        let kc = scale(&k, c);
        let fracs = map_replicas(root.child(p as u64), replicas, |_, rng| -> Result<f64, String> {
            let a = sample_iid_types(&kc, n, rng).map_err(|e| e.to_string())?;
            let g = sample_bernoulli(&a, rng).map_err(|e| e.to_string())?;
            Ok(analyze(&g).c1 as f64 / n as f64)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let mean = fracs.iter().sum::<f64>() / replicas as f64;
        let lo = fracs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = fracs.iter().copied().fold(0.0, f64::max);
        out.extend([c, mean, lo, hi]);
    }
    Ok(out)
}

/// Rows `[k, tree sum, Borel(c), simulated]` for the constant kernel `c`.
pub fn population_rows(c: f64, k_max: usize, reps: usize, seed: u64) -> Result<Vec<f64>, String> {
    if !(c >= 0.0) || reps == 0 {
        return Err("need c >= 0 and at least one run".into());
    }
    let k = StepKernel::constant(c).map_err(|e| e.to_string())?;
    let exact = population_law_treesum(&k, k_max).map_err(|e| e.to_string())?;
    let mc = population_law_mc(&k, k_max, reps, RngStream::new(seed, 0)).map_err(|e| e.to_string())?;
    Ok((1..=k_max).flat_map(|j| [j as f64, exact.prob(j), borel_pmf(c, j), mc.prob(j)]).collect())
}

#[wasm_bindgen]
pub fn rho_curve(masses: &[f64], values: &[f64], c_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    rho_curve_rows(masses, values, c_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn giant_fractions(
    masses: &[f64],
    values: &[f64],
    n: usize,
    c_max: f64,
    points: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    giant_rows(masses, values, n, c_max, points, replicas, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn population_law(c: f64, k_max: usize, reps: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    population_rows(c, k_max, reps, seed).map_err(|e| JsError::new(&e))
}
