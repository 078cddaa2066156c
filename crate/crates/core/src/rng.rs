//! Counter-based random streams.
//!
//! Every draw is addressed by a tuple of counters hashed into a ChaCha seed, so
//! a replica, a time step or a refinement sub-step can be regenerated on its
//! own without replaying the stream that precedes it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a base seed and a list of counters into a new seed.
pub fn derive_seed(seed: u64, counters: &[u64]) -> u64 {
    counters.iter().fold(splitmix64(seed), |h, &c| {
        splitmix64(h ^ splitmix64(c.wrapping_add(0xA5A5_A5A5)))
    })
}

/// Seed of replica `r` derived from a run seed.
pub fn replica_seed(seed: u64, replica: u64) -> u64 {
    derive_seed(seed, &[0x5245_504C, replica])
}

/// A generator positioned at the stream addressed by `counters`.
pub fn stream(seed: u64, counters: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, counters))
}

/// Fill `out` with standard normals from the stream addressed by `counters`.
pub fn fill_normals(seed: u64, counters: &[u64], out: &mut [f64]) {
    let mut rng = stream(seed, counters);
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}
