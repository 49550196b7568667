//! Seeded, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the run seed; the replication
//! index and a lane tag select the ChaCha stream id, so sub-streams never
//! overlap and any stream can be rebuilt independently.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Logical role of a sub-stream inside one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Lane {
    Arrivals = 0,
    Departures = 1,
    TieBreak = 2,
    Noise = 3,
    Aux = 4,
}

/// Builds the generator for `(seed, replication, lane)`.
pub fn stream(seed: u64, replication: u64, lane: Lane) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream((replication << 8) | lane as u64);
    rng
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The per-replication bundle used by the simulators.
#[derive(Debug, Clone)]
pub struct Streams {
    pub arrivals: ChaCha8Rng,
    pub departures: ChaCha8Rng,
    pub tie_break: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64, replication: u64) -> Self {
        Self {
            arrivals: stream(seed, replication, Lane::Arrivals),
            departures: stream(seed, replication, Lane::Departures),
            tie_break: stream(seed, replication, Lane::TieBreak),
        }
    }
}
