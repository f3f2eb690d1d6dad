//! Seed derivation for independent, reproducible RNG streams.
//!
//! Every stream is keyed by the master seed plus a short path of labels
//! (party id, round, phase). Streams never share state, so the order in
//! which parties run has no effect on the numbers they draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Labels for the distinct phases that draw randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    PublicPhase = 2,
    PrivatePhase = 3,
    Subset = 4,
    Digest = 5,
    Revisit = 6,
    Partition = 7,
    Pooled = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a sequence of labels into the master seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, path))
}

/// Stream owned by party `party` for `phase` in round `round`.
pub fn party_stream(master: u64, party: usize, phase: Stream, round: usize) -> StreamRng {
    stream(master, &[party as u64, phase as u64, round as u64])
}

/// Server-side subset-selection stream for round `round`.
pub fn subset_stream(master: u64, round: usize) -> StreamRng {
    stream(master, &[u64::MAX, Stream::Subset as u64, round as u64])
}
