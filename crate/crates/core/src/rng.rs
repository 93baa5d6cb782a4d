//! Deterministic random number streams.
//!
//! Every stochastic operation in this crate draws from a [`ChaCha12Rng`]
//! seeded through [`substream_rng`], which derives an independent stream
//! from a single root seed and a stable textual name. Re-running any
//! pipeline with the same root seed therefore reproduces every output
//! byte for byte, and adding a new named stream never perturbs existing
//! ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// RNG type used throughout the crate.
pub type RunRng = ChaCha12Rng;

/// FNV-1a hash of `bytes`; stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// One round of the splitmix64 output mix; decorrelates nearby inputs.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives the seed of the substream `name` under `root`.
pub fn substream_seed(root: u64, name: &str) -> u64 {
    splitmix64(root ^ fnv1a(name.as_bytes()))
}

/// Creates the RNG for the substream `name` under `root`.
pub fn substream_rng(root: u64, name: &str) -> RunRng {
    RunRng::seed_from_u64(substream_seed(root, name))
}
