//! Seed splitting for reproducible streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] addressed by
//! `(master seed, domain, index)`. Parallel and serial runs therefore consume
//! identical streams no matter how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a list of labels.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(mix(parent), |acc, &l| mix(acc ^ mix(l.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// Independent generator for `index` within `domain`.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[domain]));
    rng.set_stream(index);
    rng
}

pub(crate) mod domain {
    pub const INDIVIDUAL: u64 = 1;
    pub const CENSORING: u64 = 2;
    pub const REPLICATION: u64 = 3;
}
