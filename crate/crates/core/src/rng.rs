//! Splittable deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the run seed and a
//! (robot, purpose) pair, so each robot's noise is reproducible no matter how
//! many other robots exist or in which order they are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// FNV-1a; stable across platforms and releases, unlike DefaultHasher.
fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Independent stream for `(seed, robot_id, stream_tag)`.
pub fn split_rng(seed: u64, robot_id: u64, stream_tag: &str) -> Stream {
    let mut key = [0u8; 32];
    let words = [
        splitmix(seed),
        splitmix(seed ^ splitmix(robot_id)),
        splitmix(tag_hash(stream_tag)),
        splitmix(seed.rotate_left(17) ^ robot_id.rotate_left(41) ^ tag_hash(stream_tag)),
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(robot_id);
    rng
}
