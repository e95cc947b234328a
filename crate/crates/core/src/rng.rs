//! Seeded random streams.
//!
//! Every random draw in the crate goes through a [`SeededRng`]. Experiments
//! derive independent streams from one master seed with [`stream`], keyed by
//! a subsystem label and an index, so that adding draws to one subsystem
//! never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for `(master, label, index)`.
pub fn stream(master: u64, label: &str, index: u64) -> SeededRng {
    seeded(derive_seed(master, label, index))
}

pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    // FNV-1a over the label, then splitmix64 finalisation of the mix.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut x = splitmix(master ^ splitmix(h));
    x = splitmix(x ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
