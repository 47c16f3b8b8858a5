//! Counter-based derivation of independent random streams.
//!
//! A stream is identified by `(master_seed, stream_label, index)`. The triple
//! is hashed into a 256-bit ChaCha8 key, so any stream can be materialised
//! without touching any other one. Work split by index therefore produces the
//! same numbers regardless of how it is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type handed out by [`derive_rng`].
pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_label: String,
    pub index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_label: impl Into<String>, index: u64) -> Self {
        SeedSpec {
            master_seed,
            stream_label: stream_label.into(),
            index,
        }
    }
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive_rng(spec: &SeedSpec) -> StreamRng {
    let label = fnv1a(spec.stream_label.as_bytes());
    let mut h = mix64(spec.master_seed);
    h = mix64(h ^ label);
    h = mix64(h ^ spec.index);
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
        h = mix64(h ^ (i as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Shorthand for `derive_rng(&SeedSpec::new(master_seed, label, index))`.
pub fn stream(master_seed: u64, label: &str, index: u64) -> StreamRng {
    derive_rng(&SeedSpec::new(master_seed, label, index))
}
