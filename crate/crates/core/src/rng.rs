//! Seeded random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream used throughout the crate.
pub type SeedRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeedRng {
    SeedRng::seed_from_u64(seed)
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const PATH_OFFSET: u64 = 0xD1B5_4A32_D192_ED03;

/// Derives an independent seed from a base seed and a path of indices, e.g.
/// `(imputation seed, column, sweep)`.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    // path entries are offset so `(a, [b])` and `(b, [a])` stay distinct
    path.iter()
        .fold(mix(base), |acc, &k| mix(acc ^ mix(k.wrapping_add(PATH_OFFSET))))
}

pub fn stream(base: u64, path: &[u64]) -> SeedRng {
    seeded(derive_seed(base, path))
}
