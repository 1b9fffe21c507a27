//! Counter-based random streams. Every draw of a run comes from a stream
//! keyed by `(iteration, index)` so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Index of the stream used for parent selection within an iteration.
pub const SELECTION: u32 = u32::MAX;

pub fn stream(seed: u64, iteration: usize, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 32) | index as u64);
    rng
}
