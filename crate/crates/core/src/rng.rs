//! Counter-based randomness: every draw is a pure function of a seed and a
//! counter, so lazily evaluated infinite fields need no mutable state.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64 random bits keyed by (seed, i, j).
#[inline]
pub fn hash3(seed: u64, i: i64, j: i64) -> u64 {
    let a = mix64(seed.wrapping_add(GOLDEN));
    let b = mix64(a ^ (i as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93).wrapping_add(GOLDEN));
    mix64(
        b ^ (j as u64)
            .wrapping_mul(0xA076_1D64_78BD_642F)
            .wrapping_add(GOLDEN.rotate_left(17)),
    )
}

/// Uniform double in [0, 1) keyed by (seed, i, j).
#[inline]
pub fn uniform3(seed: u64, i: i64, j: i64) -> f64 {
    (hash3(seed, i, j) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
