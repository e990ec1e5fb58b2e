//! Seeded random streams.
//!
//! Every source of randomness derives from one master seed. Each consumer
//! (data generation, weights, signs, batch sampling, Monte Carlo) reads its
//! own ChaCha stream, so adding draws to one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Weights = 2,
    Signs = 3,
    Batches = 4,
    MonteCarlo = 5,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    substream(seed, which, 0)
}

/// Independent shard of a named stream; shard 0 is the stream itself.
pub fn substream(seed: u64, which: Stream, shard: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((which as u64) << 32) | u64::from(shard));
    rng
}
