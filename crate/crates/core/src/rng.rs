//! Per-purpose random streams derived from a single run seed.
//!
//! Every consumer of randomness gets its own ChaCha stream, so adding an
//! evaluation or a probe never shifts the draws seen by training.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Init = 1,
    Environment = 2,
    Exploration = 3,
    Sampling = 4,
    Evaluation = 5,
    Gathering = 6,
    Ablation = 7,
}

/// Stream for `purpose`; `index` separates repeated uses such as successive
/// evaluations.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | (index & ((1 << 48) - 1)));
    rng
}
