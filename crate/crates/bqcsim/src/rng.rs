//! Seeded, splittable random streams.
//!
//! Every Monte Carlo draws from `stream(seed, &[tags..])`, so a shot's randomness depends
//! only on the master seed and the shot's coordinates, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit key from a seed and a path of tags.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for &t in tags {
        h = splitmix(h ^ splitmix(t.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    h
}

pub fn stream(seed: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(seed, tags))
}
