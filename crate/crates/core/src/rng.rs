//! Seeded random streams. Every consumer draws from ChaCha8 seeded with the
//! user seed and a stream id identifying the purpose, so unrelated draws
//! never share a sequence and runs replay exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_ENSEMBLE: u64 = 1;
pub const STREAM_UPPER_BOUND: u64 = 2;
pub const STREAM_SIGNALS: u64 = 3;

pub fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

/// Stream for sub-task `index` of `purpose` at sparsity level `s`.
pub fn substream(seed: u64, purpose: u64, s: usize, index: usize) -> ChaCha8Rng {
    stream(
        seed,
        purpose << 48 | ((s as u64) & 0xff_ffff) << 24 | (index as u64 & 0xff_ffff),
    )
}
