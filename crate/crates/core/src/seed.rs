//! Seed derivation and the small stable hashes used across the crate.
//!
//! Every random stream (weight init, batch shuffling, fold assignment,
//! synthetic data) is derived from one global seed:
//!
//! ```text
//! sub_seed(global, stream) = splitmix64(global ^ fnv1a64(stream))
//! ```
//!
//! so a single knob reproduces a whole run.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// One step of the splitmix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of a named sub-stream.
pub fn sub_seed(global: u64, stream: &str) -> u64 {
    splitmix64(global ^ fnv1a64(stream.as_bytes()))
}

/// Streams used by the training and tuning code.
pub mod streams {
    pub const INIT: &str = "init";
    pub const SHUFFLE: &str = "shuffle";
    pub const FOLDS: &str = "folds";
    pub const GRAD_CHECK: &str = "grad-check";
}

/// Stateful splitmix64 generator; cheap and stable across platforms.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}
