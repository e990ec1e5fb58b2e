use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use crate::rng::{self, Stream};

/// Mini-batch sampler shared by the fast and naive trainers.
///
/// Two samplers built from the same seed yield the same batch sequence, which
/// is what lets the two trainers be compared step for step. Batches are drawn
/// uniformly without replacement and returned in ascending order.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: rng::stream(seed, Stream::Batches),
        }
    }

    /// # Panics
    /// If `size` is zero or exceeds `n`.
    pub fn sample(&mut self, n: usize, size: usize) -> Vec<usize> {
        assert!(size >= 1 && size <= n, "batch size {size} not in 1..={n}");
        let mut batch = index::sample(&mut self.rng, n, size).into_vec();
        batch.sort_unstable();
        batch
    }
}
