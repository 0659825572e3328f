//! Seeded random streams.
//!
//! Every process of a run draws from its own ChaCha stream derived from the
//! run seed, so the interleaving chosen by the scheduler never changes what a
//! process sees. Per-sample substreams are keyed by stable identifiers rather
//! than by iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream ids for the logical processes of a run.
pub mod streams {
    pub const ENGINE: u64 = 1;
    pub const UPDATER: u64 = 2;
    pub const DATA: u64 = 3;
    pub const PREDICT: u64 = 4;
    pub const TUNING: u64 = 5;
}

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A substream determined by `(seed, a, b)` alone.
pub fn keyed(seed: u64, a: u64, b: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(a)));
    rng.set_stream(splitmix(b));
    rng
}
