//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`ChaCha8Rng`], a 64-bit
//! seedable stream cipher generator from `rand_chacha`. Sub-streams are
//! derived from a base seed and a label with [`derive_seed`], so that e.g.
//! parameter initialisation does not depend on the order in which
//! parameters are created.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Generator seeded from a 64-bit integer.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a label into a base seed (FNV-1a over the label, then SplitMix64).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(seed ^ h)
}

/// Seed for the `index`-th sub-stream of `seed`.
pub fn derive_index(seed: u64, index: u64) -> u64 {
    splitmix(seed.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
