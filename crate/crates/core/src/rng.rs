//! Seed derivation: every random stream is `ChaCha8` keyed by a hash of a master seed and a
//! stream label, so adding a stream never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One step of the splitmix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}

/// Stream labels used across the workspace.
pub mod streams {
    pub const SCENE: u64 = 1;
    pub const CLEAN_INIT: u64 = 2;
    pub const FIT: u64 = 3;
    pub const SUBSET: u64 = 4;
    pub const CORRUPT_INIT: u64 = 5;
    pub const DEGRADE: u64 = 6;
    pub const DRAWS: u64 = 7;
    pub const SAMPLE: u64 = 8;
    pub const REFINE: u64 = 9;
    pub const UPDATE: u64 = 10;
    pub const MODEL_INIT: u64 = 11;
}
