//! Labeled seed derivation.
//!
//! Every randomized component receives its own stream, derived from a master
//! seed plus a stable label and a list of integer coordinates (level, fold,
//! task index, ...). Derivation is platform independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random source used throughout the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a label and coordinates into a child seed.
pub fn derive_seed(master: u64, label: &str, coords: &[u64]) -> u64 {
    // FNV-1a over the label keeps the mapping stable across builds.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01B3);
    }
    let mut s = splitmix64(master ^ splitmix64(h));
    for &c in coords {
        s = splitmix64(s ^ splitmix64(c.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    s
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Shorthand for `rng_from(derive_seed(..))`.
pub fn derive_rng(master: u64, label: &str, coords: &[u64]) -> Rng {
    rng_from(derive_seed(master, label, coords))
}
