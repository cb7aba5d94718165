//! Per-run random streams.
//!
//! Every run owns one ChaCha stream selected by `(seed, run_index)`, so a
//! run's output does not depend on which worker executes it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream for run `run_index` under `seed`.
pub fn stream_rng(seed: u64, run_index: u64) -> SimRng {
    tagged_stream(seed, run_index, 0)
}

/// Sub-stream `tag` (0..4) of a run, for drivers that need more than one
/// independent source per run.
pub fn tagged_stream(seed: u64, run_index: u64, tag: u8) -> SimRng {
    debug_assert!(tag < 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((run_index << 2) | tag as u64);
    rng
}

/// Exponential holding time with the given rate, by inversion of one uniform.
#[inline]
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}
