//! Seeding helpers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for top-level chains.
pub type ChainRng = ChaCha8Rng;

pub fn chain_rng(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for a named sub-task of a run, so that adding or
/// removing one stage does not shift the random numbers of another.
pub fn stage_rng(seed: u64, stage: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}
