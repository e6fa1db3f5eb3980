//! Deterministic random number generation.
//!
//! Two generators serve two jobs:
//!
//! * [`ParamStream`] draws parameter initializations. Each stream is
//!   seeded from a global seed plus a stable hash of the parameter name,
//!   and advances a counter internally, so adding or reordering
//!   parameters never changes the values another parameter receives.
//! * Scene synthesis uses `ChaCha8Rng` (re-exported as [`SceneRng`]),
//!   seeded per scene.

use rand_core::{RngCore, SeedableRng};

pub type SceneRng = rand_chacha::ChaCha8Rng;

/// Creates the scene-synthesis generator for one seed.
pub fn scene_rng(seed: u64) -> SceneRng {
    SceneRng::seed_from_u64(seed)
}

/// FNV-1a 64-bit hash, used to derive per-name stream seeds.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[inline]
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based stream of uniform doubles for one named parameter.
pub struct ParamStream {
    base: u64,
    counter: u64,
}

impl ParamStream {
    pub fn new(global_seed: u64, name: &str) -> Self {
        // Mix the name hash and the seed through one splitmix round so
        // that nearby seeds do not produce correlated streams.
        let base = splitmix64(fnv1a64(name.as_bytes()) ^ global_seed.rotate_left(17));
        ParamStream { base, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = splitmix64(self.base.wrapping_add(self.counter.wrapping_mul(0x2545_f491_4f6c_dd1d)));
        self.counter += 1;
        v
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(-bound, bound)`.
    pub fn next_symmetric(&mut self, bound: f64) -> f64 {
        (self.next_unit() * 2.0 - 1.0) * bound
    }
}

/// Uniform f64 in `[lo, hi)` from any `RngCore`.
pub fn uniform<R: RngCore>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    lo + unit * (hi - lo)
}

/// Uniform usize in `[0, n)`; `n` must be nonzero.
pub fn uniform_index<R: RngCore>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    // Modulo bias is negligible for the small ranges used here.
    (rng.next_u64() % n as u64) as usize
}
