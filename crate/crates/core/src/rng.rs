//! Deterministic random sub-streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator whose
//! 256-bit key is derived from `(master seed, stream tag, index)` with the
//! SplitMix64 finalizer. ChaCha8 output is specified bit-for-bit, so an
//! instance generated from a given seed is identical on every platform and for
//! every thread count: parallel work is always split along `index`, never
//! along "whichever thread got there first".

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Distinct tags give statistically independent generators for
/// the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Centers = 1,
    Labels = 2,
    Noise = 3,
    AmpInit = 4,
    CalM = 5,
    MatrixSe = 6,
    Bethe = 7,
    KMeans = 8,
    Svd = 9,
    Sweep = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit seed for `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(seed);
    let b = splitmix64(a ^ (stream as u64).rotate_left(17));
    splitmix64(b ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Generator for one sub-stream.
pub fn substream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = derive_seed(seed, stream, index);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
