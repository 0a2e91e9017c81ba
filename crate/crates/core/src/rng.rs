//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 keyed by a 64-bit seed, with a separate
//! ChaCha stream per purpose so that e.g. the sampled data and the missingness
//! pattern of one repetition never share state. Normal variates use the
//! ziggurat sampler from `rand_distr`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifier written into every report so results can be traced to a generator.
pub const PRNG_ID: &str = "chacha8(rand_chacha-0.9)+ziggurat(rand_distr-0.5)";

/// Stream used for synthetic data draws.
pub const STREAM_DATA: u64 = 0;
/// Stream used for choosing which cells go missing.
pub const STREAM_MASK: u64 = 1;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for repetition `rep` of an experiment started with `seed`.
pub fn repetition_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add(rep as u64)
}
