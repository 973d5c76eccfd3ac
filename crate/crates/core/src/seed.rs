use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with a stream label (splitmix64 finalizer), so that
/// independent random streams can be derived from one user seed.
pub fn derive(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream))
}

/// Stream labels used across the crate.
pub mod stream {
    pub const EMOTION_TRAIN: u64 = 1;
    pub const EMOTION_EVAL: u64 = 2;
    pub const PERSONALITY_TRAIN: u64 = 3;
    pub const PERSONALITY_EVAL: u64 = 4;
    pub const INIT: u64 = 10;
    pub const BATCH: u64 = 11;
    pub const EVAL_SAMPLING: u64 = 12;
    pub const PROBE: u64 = 13;
}
