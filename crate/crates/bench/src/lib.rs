//! Shared fixtures for the criterion benches.

use ftsc_core::lvs::Image;

/// Deterministic pseudo-random image of edge `n` (xorshift64, no RNG crate
/// needed for fixtures).
pub fn noise_image(n: usize, seed: u64) -> Image {
    let mut s = seed.max(1);
    let samples = (0..n * n)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    Image::new(n, n, samples).expect("square power-of-two fixture")
}
