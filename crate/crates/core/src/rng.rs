//! Named random streams.
//!
//! Every source of randomness draws from its own ChaCha stream derived from
//! the run seed, so changing one provider's traffic never shifts the draws
//! seen by another provider or by a different part of the simulator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies one independent stream of randomness within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Joint draw of the per-provider traffic rates.
    Rates,
    /// Call arrival process of one provider (0-based index).
    Arrivals(u32),
    /// Call holding times of one provider.
    Holding(u32),
    /// Cell placement of one provider's calls.
    Placement(u32),
}

impl Stream {
    fn index(self) -> u64 {
        match self {
            Stream::Rates => 0,
            Stream::Arrivals(p) => 0x1_0000 + u64::from(p),
            Stream::Holding(p) => 0x2_0000 + u64::from(p),
            Stream::Placement(p) => 0x3_0000 + u64::from(p),
        }
    }
}

/// Generator for one named stream under the given run seed.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.index());
    rng
}
