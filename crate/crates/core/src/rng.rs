//! Keyed random streams.
//!
//! A [`RngKey`] names an estimate; batch `b` of that estimate always draws from
//! ChaCha8 stream `b` of the key's seed, so sums over batches do not depend on which
//! thread produced them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Samples per batch.
pub const BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngKey {
    seed: u64,
    stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

impl RngKey {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Key of the `id`-th sub-estimate.
    pub fn child(&self, id: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(id.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }

    /// Key of a named sub-estimate.
    pub fn named(&self, name: &str) -> Self {
        self.child(fnv1a(name))
    }

    /// Generator for batch `batch` of this key.
    pub fn rng(&self, batch: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut z = splitmix64(self.seed) ^ self.stream;
        for chunk in seed.chunks_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(batch);
        rng
    }

    /// Runs `f(rng, start, len)` over consecutive batches covering `0..n` in parallel and
    /// returns the results in batch order.
    pub fn map_batches<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng, usize, usize) -> T + Sync,
    {
        let batches = n.div_ceil(BATCH);
        (0..batches)
            .into_par_iter()
            .map(|b| {
                let start = b * BATCH;
                let len = BATCH.min(n - start);
                let mut rng = self.rng(b as u64);
                f(&mut rng, start, len)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_stream() {
        let k = RngKey::new(7).named("x");
        let a: Vec<u64> = (0..4).map(|_| k.rng(3).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| k.rng(3).random()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn children_differ() {
        let k = RngKey::new(7);
        assert_ne!(k.child(0), k.child(1));
        assert_ne!(k.named("a"), k.named("b"));
        let x: u64 = k.child(0).rng(0).random();
        let y: u64 = k.child(1).rng(0).random();
        assert_ne!(x, y);
    }

    #[test]
    fn batches_independent_of_pool_size() {
        let k = RngKey::new(11);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    k.map_batches(3 * BATCH + 17, |rng, _, len| {
                        (0..len).map(|_| rng.random::<f64>()).sum::<f64>()
                    })
                })
        };
        assert_eq!(run(1), run(3));
    }
}
