//! Counter-based random streams.
//!
//! A stream is identified by `(seed, key)`; the key is typically a pixel or
//! iteration index. Streams never depend on scheduling, so parallel renders
//! reproduce bit-identically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer, used to derive seeds from keys.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, key: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(mix64(seed));
        inner.set_stream(key);
        Self { inner }
    }

    /// Derives an independent child stream, e.g. per pixel of a labelled pass.
    pub fn split(seed: u64, domain: u64, key: u64) -> Self {
        Self::new(mix64(seed ^ mix64(domain)), key)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }
}
