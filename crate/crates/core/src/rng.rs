//! Seed derivation for independent, schedule-free random streams.
//!
//! Every stochastic unit of work (a tree, a simulated path, a benchmark
//! cell) gets its own generator whose seed is a pure function of the master
//! seed and the work item's coordinates. Results therefore do not depend on
//! the order in which a thread pool executes the work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `coords` into `master` one coordinate at a time.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn stream(master: u64, coords: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, coords))
}

/// 64-bit FNV-1a, used to turn unit identifiers into stream coordinates.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
