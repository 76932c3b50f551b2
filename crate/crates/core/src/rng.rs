//! Seeded, platform-stable random streams.
//!
//! Every stochastic routine takes a [`SeededRng`]. The generator is ChaCha20
//! (`rand_chacha`), whose output is specified bit-for-bit and does not depend
//! on the host. Parallel workers derive their own stream with
//! [`SeededRng::for_worker`], using seed `seed ^ i` for worker `i`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha20Rng,
}

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng {
        seed,
        inner: ChaCha20Rng::seed_from_u64(seed),
    }
}

impl SeededRng {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        "chacha20"
    }

    /// Independent stream for parallel worker `i`.
    pub fn for_worker(&self, i: u64) -> SeededRng {
        seeded_rng(self.seed ^ i)
    }
}

impl RngCore for SeededRng {
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
