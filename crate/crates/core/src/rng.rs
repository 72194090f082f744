//! Per-replication random streams.
//!
//! Each replication gets its own ChaCha stream keyed by the master seed and
//! indexed by the replication number, so replications can run in any order
//! (or in parallel) and still draw the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn replication_rng(master_seed: u64, replication: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replication);
    rng
}
