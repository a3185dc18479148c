//! Counter-based seed splitting.
//!
//! Every random stream is `ChaCha8` keyed by the master seed with the task
//! counter as the stream id, so task `k` sees the same numbers no matter
//! which worker runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TaskRng = ChaCha8Rng;

/// Independent stream `counter` of the master `seed`.
pub fn stream(seed: u64, counter: u64) -> TaskRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(counter);
    rng
}

/// Derives a child seed, for APIs that take a seed rather than a stream.
pub fn child_seed(seed: u64, counter: u64) -> u64 {
    // splitmix64 finalizer over (seed, counter)
    let mut z = seed ^ counter.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
