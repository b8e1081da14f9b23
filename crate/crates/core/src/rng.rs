//! Reproducible random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream, keyed by the
//! master seed plus a path of labels such as `[repetition, phase, episode]`.
//! Streams never overlap, so results do not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for the given label path under `master`.
pub fn stream(master: u64, labels: &[u64]) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    let id = labels.iter().fold(0x5eed_u64, |acc, &l| splitmix64(acc ^ splitmix64(l)));
    rng.set_stream(id);
    rng
}

/// Seed for a derived child computation, e.g. one repetition of an experiment.
pub fn child_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(1)))
}
