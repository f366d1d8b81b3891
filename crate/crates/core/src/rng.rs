//! Counter-style random streams.
//!
//! Every draw in the library comes from a ChaCha8 generator keyed by
//! `(seed, domain, stream, substream)`. Streams are independent of the order
//! in which they are consumed, so parallel replications reproduce exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; part of the key so that domains never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Noise = 1,
    Truth = 2,
    Calibration = 3,
}

/// Stream id for replication `rep` at sample-size index `n_index`.
pub fn replication_stream(n_index: usize, rep: usize) -> u64 {
    ((n_index as u64) << 32) | (rep as u64 & 0xffff_ffff)
}

/// Generator for `(seed, domain, stream, substream)`.
pub fn stream_rng(seed: u64, domain: Domain, stream: u64, substream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(&stream.to_le_bytes());
    key[24..32].copy_from_slice(&substream.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
