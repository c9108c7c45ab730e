//! Seeded random streams. Every random draw in the crate goes through here so
//! runs are reproducible from explicit seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream derived from a base seed and a label, so that e.g. the
/// weights and the inputs of a model don't share draws.
pub fn substream(seed: u64, label: u64) -> Rng {
    // splitmix64 finalizer on the combined key
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}
