//! Seeded random streams.
//!
//! Every stream is a ChaCha20 generator keyed by a 64-bit seed and
//! positioned on its own 64-bit stream id, so the prior-sampling pass and
//! each Gibbs chain draw from disjoint, reproducible sequences.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Stream id reserved for the independent prior-sampling pass.
pub const PRIOR_STREAM: u64 = 0;

/// Stream id used by chain `chain` (0-based).
pub fn chain_stream(chain: usize) -> u64 {
    chain as u64 + 1
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
