//! Seedable, portable random streams.
//!
//! Every run derives independent ChaCha8 streams from one master seed so that
//! the draws of one component never shift the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SearchRng = ChaCha8Rng;

/// Component streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Engine = 1,
    Construction = 2,
    Crossover = 3,
    LocalSearch = 4,
    Variation = 5,
    Harness = 6,
}

pub fn stream(seed: u64, which: Stream) -> SearchRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Seed of the `index`-th run of a batch (splitmix64 of the master seed).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
