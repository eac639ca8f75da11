//! Seed derivation.
//!
//! Every pipeline stage draws from its own ChaCha12 stream so stages can be
//! rerun in isolation and replicate batches can derive independent
//! sub-streams without coordination. The scheme is a plain counter: the
//! master seed keys the cipher, the stream id selects the stage.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stage stream ids for [`stream_rng`]. Fixed; new stages append.
pub mod streams {
    pub const POPULATION: u64 = 1;
    pub const TIES: u64 = 2;
    pub const IDENTIFIERS: u64 = 3;
    pub const STUDY: u64 = 4;
    pub const PERMUTATION: u64 = 5;
    /// Base for caller-derived replicate streams; replicate `i` uses
    /// `REPLICATE_BASE + i`.
    pub const REPLICATE_BASE: u64 = 1 << 32;
}

/// RNG for stage `stream` of a run keyed by `master_seed`.
///
/// Streams with distinct ids are statistically independent; the same
/// (seed, stream) pair always yields the same sequence, on every platform.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}
