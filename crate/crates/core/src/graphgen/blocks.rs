//! Geometric-skip sampling over blocks of vertex subsets.
//!
//! A block is the family of all `r`-subsets of the vertex set whose type
//! multiset is fixed: `k_t` vertices from each group `V_t`. Its members are
//! indexed by a mixed-radix number whose digits are colex ranks of
//! `k_t`-combinations. When every member of a block is present with the same
//! probability `p`, the gaps between present members are geometric, so a
//! block costs O(#present) draws rather than O(#members).

use rand::Rng;

use crate::error::{Error, Result};

/// `C(n, k)`, or `None` on overflow.
pub(crate) fn binom(n: u128, k: usize) -> Option<u128> {
    let k = k as u128;
    if k > n {
        return Some(0);
    }
    let mut acc: u128 = 1;
    for t in 1..=k {
        // acc * (n - k + t) / t is exact at every step
        acc = acc.checked_mul(n - k + t)? / t;
    }
    Some(acc)
}

/// Writes the colex-ranked `k`-combination of `0..n` with the given rank into
/// `out`, ascending.
fn unrank_combination(mut rank: u128, n: usize, k: usize, out: &mut [usize]) {
    let mut hi = n; // exclusive upper bound for the next element
    for i in (1..=k).rev() {
        // largest c < hi with C(c, i) <= rank
        let (mut lo, mut up) = (i - 1, hi - 1);
        while lo < up {
            let mid = lo + (up - lo + 1) / 2;
            if binom(mid as u128, i).expect("fits: below block size") <= rank {
                lo = mid;
            } else {
                up = mid - 1;
            }
        }
        rank -= binom(lo as u128, i).expect("fits: below block size");
        out[i - 1] = lo;
        hi = lo;
    }
}

/// One block: groups of vertices and how many to take from each.
pub(crate) struct Block<'a> {
    pub groups: Vec<&'a [usize]>,
    pub take: Vec<usize>,
}

impl Block<'_> {
    pub fn size(&self) -> Result<u128> {
        let mut total: u128 = 1;
        for (g, &k) in self.groups.iter().zip(&self.take) {
            let c = binom(g.len() as u128, k).ok_or_else(too_large)?;
            total = total.checked_mul(c).ok_or_else(too_large)?;
        }
        Ok(total)
    }

    fn decode(&self, mut index: u128, scratch: &mut Vec<usize>, out: &mut Vec<usize>) {
        out.clear();
        for (g, &k) in self.groups.iter().zip(&self.take) {
            let radix = binom(g.len() as u128, k).expect("checked in size()");
            let digit = index % radix;
            index /= radix;
            scratch.resize(k, 0);
            unrank_combination(digit, g.len(), k, scratch);
            out.extend(scratch.iter().map(|&p| g[p]));
        }
        out.sort_unstable();
    }

    /// Calls `emit` with each member selected independently with probability
    /// `p`, in increasing index order.
    pub fn sample<R: Rng + ?Sized>(&self, p: f64, rng: &mut R, mut emit: impl FnMut(&[usize])) -> Result<()> {
        if !(p > 0.0) {
            return Ok(());
        }
        let size = self.size()?;
        let mut scratch = Vec::new();
        let mut tuple = Vec::new();
        if p >= 1.0 {
            for idx in 0..size {
                self.decode(idx, &mut scratch, &mut tuple);
                emit(&tuple);
            }
            return Ok(());
        }
        let log_q = (-p).ln_1p();
        let mut next: u128 = 0;
        loop {
            let u: f64 = 1.0 - rng.random::<f64>();
            let skip = (u.ln() / log_q).floor();
            if skip >= (size - next) as f64 {
                return Ok(());
            }
            next += skip as u128;
            if next >= size {
                return Ok(());
            }
            self.decode(next, &mut scratch, &mut tuple);
            emit(&tuple);
            next += 1;
            if next >= size {
                return Ok(());
            }
        }
    }
}

fn too_large() -> Error {
    Error::InvalidArgument("block index space exceeds 128 bits".into())
}

/// Enumerates sorted type tuples `t_1 <= ... <= t_r` over `m` types.
pub(crate) fn type_multisets(m: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; r];
    fn rec(m: usize, pos: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for t in start..m {
            cur[pos] = t;
            rec(m, pos + 1, t, cur, out);
        }
    }
    if r > 0 && m > 0 {
        rec(m, 0, 0, &mut cur, &mut out);
    }
    out
}

/// The block for a sorted type tuple over vertex groups.
pub(crate) fn block_for<'a>(groups: &'a [Vec<usize>], tuple: &[usize]) -> Block<'a> {
    let mut gs = Vec::new();
    let mut take = Vec::new();
    let mut i = 0;
    while i < tuple.len() {
        let t = tuple[i];
        let mut j = i;
        while j < tuple.len() && tuple[j] == t {
            j += 1;
        }
        gs.push(groups[t].as_slice());
        take.push(j - i);
        i = j;
    }
    Block { groups: gs, take }
}
