//! Seeded, stream-split random number generation.
//!
//! Every independent consumer (a chain, a trial, a batch of reference
//! samples) gets its own ChaCha stream keyed by the master seed, so results
//! do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream index offsets keep unrelated consumers apart.
pub mod streams {
    pub const CHAINS: u64 = 0;
    pub const XI: u64 = 1 << 40;
    pub const TRIALS: u64 = 2 << 40;
    pub const MISC: u64 = 3 << 40;
}

pub fn master(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Pairwise summation; fixed association order regardless of thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
