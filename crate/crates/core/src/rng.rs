//! Seeded random streams.
//!
//! All randomness in the pipeline is derived from one master seed. Each
//! consumer asks for a named substream (optionally indexed), so results do not
//! depend on the order in which unrelated components draw numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Fresh stream for a master seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministic substream `(label, index)` of the master `seed`.
///
/// The ChaCha key comes from the seed and the 64-bit stream id from a hash of
/// the label and index, so substreams never overlap.
pub fn substream(seed: u64, label: &str, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(mix(fnv1a(label.as_bytes()) ^ mix(index)));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

// splitmix64 finalizer
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
