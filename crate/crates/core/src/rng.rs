//! Deterministic, splittable random number streams.
//!
//! Every randomized procedure in this crate derives one ChaCha stream per
//! unit of work from `(seed, kind, index, label)`. Work units can then run
//! concurrently in any order and still produce bit-identical results: the
//! stream id depends only on what the work is, never on when it runs.
//!
//! Streams are keyed by the group's *label* (its id), not its position in
//! the study, so reordering or relabeling groups permutes outputs without
//! changing any drawn values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for. Separates e.g. data generation from
/// bootstrap resampling so the two never share a stream by accident.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// Subject resampling for bootstrap replicate `index`.
    Resample,
    /// Synthetic decision generation for run `index`.
    Generate,
    /// Derivation of a child seed (per simulation cell or run).
    ChildSeed,
}

impl StreamKind {
    fn tag(self) -> u8 {
        match self {
            StreamKind::Resample => 1,
            StreamKind::Generate => 2,
            StreamKind::ChildSeed => 3,
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over an arbitrary byte string.
pub fn fnv1a_64(data: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &byte in data {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// SplitMix64 finalizer; bijective on u64, used to spread stream ids.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream_id(kind: StreamKind, index: u64, label: &str) -> u64 {
    let mut h = fnv1a_64(label.as_bytes());
    h ^= (kind.tag() as u64) << 56;
    mix64(h ^ mix64(index))
}

/// A ChaCha generator on the stream identified by `(kind, index, label)`
/// under the master `seed`.
pub fn stream_rng(seed: u64, kind: StreamKind, index: u64, label: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(kind, index, label));
    rng
}

/// A 64-bit child seed derived from `(seed, index, label)`. Used to give
/// each simulation cell and each run within a cell its own seed space.
pub fn child_seed(seed: u64, index: u64, label: &str) -> u64 {
    use rand::Rng;
    stream_rng(seed, StreamKind::ChildSeed, index, label).random()
}
