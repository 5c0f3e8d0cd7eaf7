//! Deterministic random streams.
//!
//! Every run derives all of its randomness from one master seed. Each noise
//! source draws from its own ChaCha stream so that switching one source off
//! (or changing how many samples it consumes) leaves the others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams of a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Scatterer placement.
    Scene,
    /// Observation noise.
    Noise,
    /// Acquisition (initialisation) error.
    Init,
    /// Synthesized IMU noise.
    Imu,
    /// Model-driven simulation (surrogates, matched-model runs).
    Process,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Scene => 1,
            Stream::Noise => 2,
            Stream::Init => 3,
            Stream::Imu => 4,
            Stream::Process => 5,
        }
    }
}

/// Returns the generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Derives `n` per-run seeds from a campaign master seed.
pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(0xCA4F);
    (0..n).map(|_| rng.random::<u64>()).collect()
}
