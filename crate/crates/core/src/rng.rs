//! Seed derivation. Every random stream in the crate is a `ChaCha8Rng` seeded from a
//! `u64` obtained by mixing a parent seed with a stream label, so results never depend
//! on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `stream` under `parent`.
pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    splitmix64(parent ^ splitmix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Child seed for a sequence of stream labels, applied left to right.
pub fn derive_seed_path(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(parent, |s, &p| derive_seed(s, p))
}
