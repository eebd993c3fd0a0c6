//! Counter-based randomness on top of ChaCha8.
//!
//! Every random draw is addressed by (seed, stream, counter): the seed keys
//! the cipher, the stream selects an independent substream (per-sample id),
//! and the counter positions inside the stream (per-pixel / per-iteration).
//! Draws are therefore reproducible bit-for-bit regardless of evaluation
//! order or parallel schedule.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Expand a 64-bit seed into a 32-byte ChaCha key (splitmix64 chain).
fn expand_key(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    key
}

/// Addressable source of deterministic draws.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive a child generator with an independent seed; used to give each
    /// pipeline stage its own keyspace.
    pub fn child(&self, tag: u64) -> CounterRng {
        let mut z = self.seed ^ tag.wrapping_mul(0x9E3779B97F4A7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        CounterRng { seed: z ^ (z >> 31) }
    }

    /// Raw 64-bit draw at (stream, counter).
    pub fn u64_at(&self, stream: u64, counter: u64) -> u64 {
        let mut rng = ChaCha8Rng::from_seed(expand_key(self.seed));
        rng.set_stream(stream);
        // each counter owns 4 32-bit words = 2 u64 draws; use the first
        rng.set_word_pos(counter as u128 * 4);
        rng.next_u64()
    }

    /// Uniform draw in (0, 1].
    pub fn uniform_at(&self, stream: u64, counter: u64) -> f64 {
        u64_to_unit(self.u64_at(stream, counter))
    }

    /// Standard normal draw via Box-Muller on two uniforms from the same
    /// counter slot.
    pub fn normal_at(&self, stream: u64, counter: u64) -> f64 {
        let mut rng = ChaCha8Rng::from_seed(expand_key(self.seed));
        rng.set_stream(stream);
        rng.set_word_pos(counter as u128 * 4);
        let u1 = u64_to_unit(rng.next_u64());
        let u2 = u64_to_unit(rng.next_u64());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in [0, n) by scaled multiplication; n must be small
    /// relative to 2^64 (always the case here: labels, pixels, indices).
    pub fn index_at(&self, stream: u64, counter: u64, n: usize) -> usize {
        debug_assert!(n > 0);
        let v = self.u64_at(stream, counter);
        ((v as u128 * n as u128) >> 64) as usize
    }

    /// Sequential generator over one stream, for order-dependent draws such
    /// as shuffle permutations.
    pub fn stream_rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(expand_key(self.seed));
        rng.set_stream(stream);
        rng
    }
}

/// Map a u64 to (0, 1]: 53 mantissa bits, never exactly 0 so ln() is safe.
fn u64_to_unit(v: u64) -> f64 {
    ((v >> 11) as f64 + 1.0) * (1.0 / 9007199254740992.0)
}

/// Fisher-Yates permutation of 0..n drawn sequentially from one stream.
pub fn permutation(rng: &CounterRng, stream: u64, n: usize) -> Vec<usize> {
    let mut seq = rng.stream_rng(stream);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((seq.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        perm.swap(i, j);
    }
    perm
}
