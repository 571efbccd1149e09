//! Deterministic random-number streams.
//!
//! Every randomized stage of the pipeline (parameter init, shuffling, input
//! generation, mutant sampling, splitting) draws from its own named ChaCha20
//! substream of a single user-visible seed. Streams are independent, so adding
//! draws to one stage never perturbs another, and a `(seed, name)` pair always
//! reproduces the same sequence on every platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// FNV-1a hash of a stream name, used as the ChaCha20 stream id.
fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A reproducible generator for one named stage under a run seed.
pub fn stream(seed: u64, name: &str) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}
