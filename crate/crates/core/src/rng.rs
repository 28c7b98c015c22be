//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] obtained through
//! [`substream`]. The rule is:
//!
//! * the 32-byte ChaCha key is `ChaCha8Rng::seed_from_u64(seed)`'s key;
//! * the 64-bit ChaCha stream id is the SplitMix64 fold of the index path.
//!
//! Two different index paths under the same seed therefore address disjoint
//! ChaCha streams, and a job's stream never depends on which thread ran it or
//! in which order jobs were scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds an index path into a single stream id.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(path.len() as u64), |acc, &i| splitmix64(acc ^ splitmix64(i)))
}

/// Independent generator for `(seed, path)`.
pub fn substream(seed: u64, path: &[u64]) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(path));
    rng
}

/// Derives a child seed, used when a whole experiment is nested inside a sweep.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    splitmix64(seed ^ stream_id(path))
}
