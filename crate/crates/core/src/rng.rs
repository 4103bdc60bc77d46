//! Named, splittable seed derivation.
//!
//! Every random stream in a run is a [`ChaCha8Rng`] whose seed is derived
//! from the run seed, a stream name and a list of integer coordinates
//! (sample index, epoch, ...). Streams never share state, so changing the
//! order in which samples are visited leaves every per-sample draw intact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit FNV-1a hash. Used for stream names and source ids, where
/// the value must not change between toolchains.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive_seed(base: u64, stream: &str, coords: &[u64]) -> u64 {
    let mut state = mix64(base ^ GOLDEN);
    state = mix64(state ^ fnv1a64(stream.as_bytes()));
    for &c in coords {
        state = mix64(state.wrapping_add(GOLDEN) ^ c);
    }
    state
}

pub fn stream(base: u64, name: &str, coords: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, name, coords))
}
