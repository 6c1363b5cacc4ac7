//! Counter-based seed derivation for dropout masks.
//!
//! Every dropout mask is drawn from its own ChaCha8 stream whose seed is a
//! pure function of `(global_seed, input_index, sample_index, layer_ordinal)`:
//!
//! ```text
//! h = mix64(global_seed ^ 0x9E3779B97F4A7C15)
//! h = mix64(h ^ mix64(input_index   + 1 * 0x9E3779B97F4A7C15))
//! h = mix64(h ^ mix64(sample_index  + 2 * 0x9E3779B97F4A7C15))
//! h = mix64(h ^ mix64(layer_ordinal + 3 * 0x9E3779B97F4A7C15))
//! ```
//!
//! (wrapping arithmetic), where `mix64` is the SplitMix64 output finalizer.
//! The stream is `ChaCha8Rng::seed_from_u64(h)`; each element draws one
//! `f64` in `[0, 1)` and is kept when the draw is `>= rate`. Masks therefore
//! do not depend on thread count or evaluation order. These constants are
//! part of the output contract and must not change.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(
    global_seed: u64,
    input_index: u64,
    sample_index: u32,
    layer_ordinal: usize,
) -> u64 {
    let mut h = mix64(global_seed ^ GOLDEN);
    let words = [input_index, u64::from(sample_index), layer_ordinal as u64];
    for (k, w) in words.into_iter().enumerate() {
        let salt = GOLDEN.wrapping_mul(k as u64 + 1);
        h = mix64(h ^ mix64(w.wrapping_add(salt)));
    }
    h
}

pub fn mask_rng(
    global_seed: u64,
    input_index: u64,
    sample_index: u32,
    layer_ordinal: usize,
) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(
        global_seed,
        input_index,
        sample_index,
        layer_ordinal,
    ))
}
