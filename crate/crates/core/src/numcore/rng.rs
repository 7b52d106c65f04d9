//! Seeded, splittable random source.
//!
//! Every stochastic step in the simulator draws from an [`Rng`] that is
//! passed explicitly. Child streams are derived with [`Rng::fork`], which
//! depends only on the parent's seed and the tag, never on how many values
//! the parent has already produced. That is what keeps per-client training
//! reproducible regardless of scheduling order or worker count.
//!
//! The underlying generator is ChaCha8, a counter-based stream cipher with a
//! portable, platform-independent output sequence.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Well-known fork tags. Using named constants keeps derived streams
/// from colliding by accident.
pub mod stream {
    pub const DATA: u64 = 0x01;
    pub const PARTITION: u64 = 0x02;
    pub const ATTACK: u64 = 0x03;
    pub const MODEL_INIT: u64 = 0x04;
    pub const PRETRAIN: u64 = 0x05;
    pub const PROBE: u64 = 0x06;
    pub const ADAPTER_MASK: u64 = 0x07;
    pub const UNLEARN: u64 = 0x08;
    pub const RETRAIN: u64 = 0x09;
    pub const RELEARN: u64 = 0x0a;
    pub const THEORY: u64 = 0x0b;
    pub const SPLIT: u64 = 0x0c;
    pub const CLIENT: u64 = 0x100;
    pub const ROUND: u64 = 0x200;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent child stream: `seed' = mix64(seed ^ mix64(tag))`.
    pub fn fork(&self, tag: u64) -> Rng {
        Rng::new(mix64(self.seed ^ mix64(tag)))
    }

    /// Shorthand for `fork(role).fork(CLIENT + client).fork(ROUND + round)`.
    pub fn for_client_round(&self, role: u64, client: usize, round: usize) -> Rng {
        self.fork(role)
            .fork(stream::CLIENT.wrapping_add(client as u64))
            .fork(stream::ROUND.wrapping_add(round as u64))
    }

    /// Uniform draw in `[lo, hi)`; returns `lo` when the interval is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        self.inner.random_range(lo..hi)
    }

    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            // still consume a draw so stream positions do not depend on p
            let _ = self.unit();
            return true;
        }
        self.unit() < p
    }

    /// Gamma(shape, 1) draw. Caller guarantees `shape > 0`.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        Gamma::new(shape, 1.0)
            .expect("gamma shape must be positive and finite")
            .sample(&mut self.inner)
    }

    /// Uniform index in `0..n`. Panics on `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// Random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

impl RngCore for Rng {
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
