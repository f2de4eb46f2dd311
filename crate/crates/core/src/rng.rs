//! Seeded random streams.
//!
//! All randomness derives from one 64-bit seed. Independent work items (walks,
//! samples, trials) each take their own ChaCha stream, so results do not depend
//! on how a parallel scheduler batches them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for work item `stream` under `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed, for nesting (e.g. trial → per-trial samples).
pub fn child_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
