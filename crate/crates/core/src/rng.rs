//! Seeded random streams.
//!
//! Every Monte Carlo path draws from its own ChaCha8 stream, keyed by
//! `base_seed ^ path_index`. ChaCha8 is a counter-based generator, so any
//! path can be regenerated in isolation and paths can be produced on any
//! number of threads without changing a single bit of the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Generator seeded directly from a 64-bit token.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Substream for path `index` under `base_seed`.
pub fn substream(base_seed: u64, index: u64) -> SimRng {
    seeded(substream_seed(base_seed, index))
}

/// Seed token recorded on the path produced by [`substream`].
pub fn substream_seed(base_seed: u64, index: u64) -> u64 {
    base_seed ^ index
}
