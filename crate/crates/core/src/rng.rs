//! Deterministic random source used by every stochastic component.
//!
//! The generator is ChaCha8 (`rand_chacha`), a counter-based stream cipher
//! whose output depends only on `(seed, stream, word position)`. That triple
//! is the whole state, so it serializes into checkpoints and restores exactly
//! on any platform. Independent sub-streams come from [`RngState::split`].

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

/// Serializable position of an [`RngState`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngSnapshot {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

/// SplitMix64 finalizer, used to derive seeds from `(seed, tag)` pairs.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child generator keyed by `tag`; does not advance `self`.
    pub fn split(&self, tag: u64) -> Self {
        Self::new(mix64(self.seed ^ mix64(tag)))
    }

    pub fn snapshot(&self) -> RngSnapshot {
        RngSnapshot {
            seed: self.seed,
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn restore(s: RngSnapshot) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(s.seed);
        inner.set_stream(s.stream);
        inner.set_word_pos(s.word_pos);
        Self {
            seed: s.seed,
            inner,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
