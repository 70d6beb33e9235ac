//! Seed derivation. Every random stream in a run is a ChaCha8 stream keyed by
//! the master seed and the replicate index, with the stream id selecting the
//! consumer (θ* draw, action sets, reward noise, policy randomness).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_THETA: u64 = 0;
pub const STREAM_ACTIONS: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
const STREAM_POLICY_BASE: u64 = 16;

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(master: u64, replicate: u64, stream_id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(master ^ mix(replicate)));
    rng.set_stream(stream_id);
    rng
}

pub fn policy_stream(master: u64, replicate: u64, policy_index: usize) -> Rng {
    stream(master, replicate, STREAM_POLICY_BASE + policy_index as u64)
}
