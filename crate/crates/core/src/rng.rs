//! Seeded random streams.
//!
//! Every stochastic stage uses xoshiro256++ seeded through SplitMix64 from a
//! user-supplied 64-bit seed. Independent substreams (one per chain or one per
//! projected trajectory) are the base generator advanced by successive
//! `jump()` calls, i.e. stream `k` starts `k * 2^128` steps into the sequence.
//! This layout is part of the reproducibility contract.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

/// Generator for stream 0.
pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// The first `n` non-overlapping substreams for `seed`.
pub fn substreams(seed: u64, n: usize) -> Vec<SimRng> {
    let mut base = seeded(seed);
    (0..n)
        .map(|_| {
            let stream = base.clone();
            base.jump();
            stream
        })
        .collect()
}
