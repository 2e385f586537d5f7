//! Named random streams derived from one master seed.
//!
//! Every consumer of randomness owns its own stream, so switching the rate
//! protocol (which changes how many backoff draws are made) never perturbs
//! the mobility or fading sequences of a compared run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Mobility,
    Fading,
    Backoff,
    Init,
    Jitter,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Mobility => 0x6d6f_6269_6c69_7479,
            Stream::Fading => 0x6661_6469_6e67_0000,
            Stream::Backoff => 0x6261_636b_6f66_6600,
            Stream::Init => 0x696e_6974_0000_0000,
            Stream::Jitter => 0x6a69_7474_6572_0000,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream for `(master seed, stream)`.
pub fn stream(seed: u64, which: Stream) -> SimRng {
    SimRng::seed_from_u64(splitmix64(seed ^ which.tag()))
}
