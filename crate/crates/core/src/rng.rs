//! Seeded random streams.
//!
//! Every random choice in the crate is drawn from a ChaCha8 generator keyed by a
//! 64-bit seed and a stream id, so independent consumers (boosting runs, the
//! solver loop, data subsampling) never share a sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SolverRng = ChaCha8Rng;

/// Stream used for pivot selection when no boosting is requested.
pub const STREAM_NYSTROM: u64 = 0;
/// Stream used by iterative solver loops for block sampling.
pub const STREAM_SOLVER: u64 = 1 << 40;
/// Stream used for dataset subsampling and synthetic data.
pub const STREAM_DATA: u64 = 2 << 40;
/// Stream used for synthetic matrix construction.
pub const STREAM_MATRIX: u64 = 3 << 40;
/// Base of the streams used by Monte Carlo rate trials; trial `i` uses
/// `STREAM_TRIALS + i`.
pub const STREAM_TRIALS: u64 = 4 << 40;

/// Generator for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> SolverRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws an index with probability proportional to `weights[i]`.
///
/// `total` must equal the sum of the (nonnegative) weights. Zero weights are
/// never selected. Returns `None` when `total` is not positive.
pub fn sample_proportional<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> Option<usize> {
    if !(total > 0.0) {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = Some(i);
            if target < acc {
                return Some(i);
            }
        }
    }
    // round-off in the running sum
    last_positive
}
