//! Erdős–Rényi polarity graphs over prime fields.
//!
//! Vertices are the points of the projective plane PG(2, q), written with the
//! first nonzero coordinate scaled to 1; `x ~ y` iff `x . y = 0` in GF(q).
//! Absolute points (`x . x = 0`) would carry a loop, which is dropped, so they
//! have degree `q` and every other point has degree `q + 1`.

use crate::error::{Error, Result};
use crate::graphgen::SparseGraph;

pub fn is_prime(q: u64) -> bool {
    if q < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= q {
        if q % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn inverse(a: u64, q: u64) -> u64 {
    // Fermat: a^(q-2)
    let (mut base, mut exp, mut acc) = (a % q, q - 2, 1u64);
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % q;
        }
        base = base * base % q;
        exp >>= 1;
    }
    acc
}

/// Canonical representatives in index order: `(1, a, b)` for `a, b` in
/// GF(q) (index `a q + b`), then `(0, 1, b)`, then `(0, 0, 1)`.
pub fn polarity_points(q: u64) -> Result<Vec<[u64; 3]>> {
    if !is_prime(q) {
        return Err(Error::NotPrime(q));
    }
    let mut pts = Vec::with_capacity((q * q + q + 1) as usize);
    for a in 0..q {
        for b in 0..q {
            pts.push([1, a, b]);
        }
    }
    for b in 0..q {
        pts.push([0, 1, b]);
    }
    pts.push([0, 0, 1]);
    Ok(pts)
}

fn index_of(p: [u64; 3], q: u64) -> usize {
    let q2 = q * q;
    let idx = if p[0] != 0 {
        let s = inverse(p[0], q);
        (p[1] * s % q) * q + p[2] * s % q
    } else if p[1] != 0 {
        let s = inverse(p[1], q);
        q2 + p[2] * s % q
    } else {
        q2 + q
    };
    idx as usize
}

/// Polarity graph on `q^2 + q + 1` vertices.
pub fn polarity_graph(q: u64) -> Result<SparseGraph> {
    let pts = polarity_points(q)?;
    let n = pts.len();
    let mut edges = Vec::with_capacity(n * (q as usize + 1) / 2);
    for (xi, x) in pts.iter().enumerate() {
        // two independent solutions u, v of x . y = 0; the line is
        // {u} together with {v + t u : t in GF(q)}
        let (u, v) = line_basis(*x, q);
        let mut visit = |y: [u64; 3]| {
            let yi = index_of(y, q);
            if xi < yi {
                edges.push((xi, yi));
            }
        };
        visit(u);
        for t in 0..q {
            visit([(v[0] + t * u[0]) % q, (v[1] + t * u[1]) % q, (v[2] + t * u[2]) % q]);
        }
    }
    Ok(SparseGraph::from_canonical(n, edges, false))
}

fn line_basis(x: [u64; 3], q: u64) -> ([u64; 3], [u64; 3]) {
    let neg = |a: u64| (q - a % q) % q;
    // pick a pivot coordinate with x_k != 0 and solve for it
    let k = x.iter().position(|&c| c != 0).expect("projective point is nonzero");
    let others: Vec<usize> = (0..3).filter(|&i| i != k).collect();
    let inv = inverse(x[k], q);
    let mut basis = [[0u64; 3]; 2];
    for (slot, &free) in others.iter().enumerate() {
        // y_free = 1, other free coordinate 0, y_k = -x_free / x_k
        let mut y = [0u64; 3];
        y[free] = 1;
        y[k] = neg(x[free]) * inv % q;
        basis[slot] = y;
    }
    (basis[0], basis[1])
}
