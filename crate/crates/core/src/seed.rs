//! Seed derivation and the project-wide seedable generator.
//!
//! Every random stream in a simulation is a `ChaCha8Rng` whose seed is
//! derived from the master seed and a path of integers (round, client, ...).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Name recorded in result metadata so fixtures can be traced to a generator.
pub const GENERATOR_NAME: &str = "ChaCha8Rng (rand_chacha 0.9)";

/// Stream tags keep independent consumers of the same (round, client) apart.
pub mod stream {
    pub const PARTITION: u64 = 1;
    pub const CLIENT_TRAIN: u64 = 2;
    pub const DP_NOISE: u64 = 3;
    pub const ADVERSARY: u64 = 4;
    pub const REPLICA: u64 = 5;
    pub const MODEL_INIT: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `master` with each element of `path`; distinct paths give
/// statistically independent seeds.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
