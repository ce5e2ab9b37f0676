//! Reproducible random streams.
//!
//! Every random draw in the crate goes through an [`RngStream`]: a root seed
//! plus a stream id. Ensembles hand out consecutive stream ids to replicas, so
//! results do not depend on how replicas are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Builds the generator for this (seed, stream) pair.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// A child stream, derived by mixing `index` into the stream id.
    ///
    /// Used for the (root, experiment, replica) derivation: a child of a child
    /// is again a plain `RngStream`.
    pub fn child(&self, index: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x9e37_79b9))),
            stream: index,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `f` for every replica index in `0..reps`, each with its own child
/// stream, and returns the results in index order.
pub fn map_replicas<T, F>(root: RngStream, reps: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut StreamRng) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..reps)
            .into_par_iter()
            .map(|i| f(i, &mut root.child(i as u64).rng()))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..reps)
            .map(|i| f(i, &mut root.child(i as u64).rng()))
            .collect()
    }
}
