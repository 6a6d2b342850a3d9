//! Deterministic RNG stream derivation.
//!
//! Every trial, agent and recursion gets its own ChaCha stream whose seed is a
//! pure function of the master seed, so trials can run in any order or on any
//! thread and still reproduce bit-identical trajectories.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags mixed into the stream seed so that streams used for
/// different things never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Topology,
    AgentParams,
    Minimizers,
    FirstRecursion,
    SecondRecursion,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Topology => 0x746f_706f,
            StreamKind::AgentParams => 0x6167_656e,
            StreamKind::Minimizers => 0x6d69_6e69,
            StreamKind::FirstRecursion => 0x7265_6331,
            StreamKind::SecondRecursion => 0x7265_6332,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `(seed, kind, trial, agent)` into a 64-bit stream seed.
pub fn stream_seed(seed: u64, kind: StreamKind, trial: u64, agent: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ kind.tag());
    h = splitmix64(h ^ trial);
    splitmix64(h ^ agent.wrapping_mul(0x2545_f491_4f6c_dd1d))
}

pub fn stream(seed: u64, kind: StreamKind, trial: u64, agent: u64) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(seed, kind, trial, agent))
}
