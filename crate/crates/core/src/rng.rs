//! Seeded, platform-stable random streams.
//!
//! The generator is SplitMix64: a 64-bit Weyl counter passed through a
//! fixed avalanche mix. Its entire state is `(seed, draws)`, so a stream
//! can be checkpointed and resumed exactly, and the same seed yields the
//! same sequence on every platform.
//!
//! One master seed feeds several named substreams (`init`, `shuffle`, ...).
//! Substreams are independent, so e.g. inserting a layer (which draws from
//! `init`/`growth`) never shifts the data-shuffle order.

use serde::{Deserialize, Serialize};

pub const ALGORITHM: &str = "splitmix64";

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub mod streams {
    pub const INIT: &str = "init";
    pub const SHUFFLE: &str = "shuffle";
    pub const SUBSET: &str = "subset";
    pub const GROWTH: &str = "growth";
    pub const VERIFY: &str = "verify";
    pub const CONTROL: &str = "control";
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Resumable position of a [`SeededRng`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub draws: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededRng {
    seed: u64,
    draws: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, draws: 0 }
    }

    /// Derives the named substream of `master`.
    pub fn substream(master: u64, name: &str) -> Self {
        Self::new(mix64(master ^ fnv1a(name)))
    }

    pub fn from_state(state: RngState) -> Self {
        Self {
            seed: state.seed,
            draws: state.draws,
        }
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            draws: self.draws,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws = self.draws.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.draws.wrapping_mul(GAMMA)))
    }

    /// Uniform in `[0, 1)` with 24 bits of resolution.
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u64 << 24) as f32)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.next_f32()
    }

    /// Integer in `[0, n)` via a 128-bit multiply; `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Fisher-Yates, drawing `len - 1` values.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        self.shuffle(&mut order);
        order
    }
}
