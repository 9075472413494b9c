//! Counter-based random streams.
//!
//! Every simulated dataset is drawn from its own ChaCha stream addressed by
//! `(seed, stream)`. Replicate `r` of an experiment always uses stream `r`,
//! so results do not depend on how replicates are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
