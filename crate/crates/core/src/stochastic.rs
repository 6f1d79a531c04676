//! Seedable random streams. Every random number in a run comes from here.
//!
//! Streams are keyed by `(master seed, path index, purpose)`. The key picks a
//! ChaCha8 stream id, so paths can be generated on any thread, in any order,
//! and still reproduce bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// What a stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamPurpose {
    Brownian = 0,
    DemandNoise = 1,
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, path_index: u64, purpose: StreamPurpose) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // 56 bits of path index, 8 bits of purpose.
        rng.set_stream((path_index << 8) | purpose as u64);
        Self { rng }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// One Brownian increment over `dt`, a draw from `N(0, dt)`.
pub fn brownian_increment(stream: &mut RandomStream, dt: f64) -> f64 {
    debug_assert!(dt >= 0.0);
    stream.standard_normal() * dt.sqrt()
}

/// Per-tick demand noise `r_t · m` with `r_t` standard normal.
pub fn demand_noise(stream: &mut RandomStream, m: f64) -> f64 {
    let r = stream.standard_normal();
    r * m
}

/// The pair of streams a single path consumes.
#[derive(Debug, Clone)]
pub struct PathStreams {
    pub brownian: RandomStream,
    pub demand: RandomStream,
}

impl PathStreams {
    pub fn new(seed: u64, path_index: u64) -> Self {
        Self {
            brownian: RandomStream::new(seed, path_index, StreamPurpose::Brownian),
            demand: RandomStream::new(seed, path_index, StreamPurpose::DemandNoise),
        }
    }
}
