//! Benchmark inputs shared by the criterion targets in `benches/`.

use weathernet::{Real, Tensor};

/// Deterministic pseudo-random values in `[-1, 1)`, cheap enough that input
/// construction never shows up in a profile.
pub fn filled<T: Real>(shape: &[usize], seed: u64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let data = (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            T::from_f64((state >> 11) as f64 / (1u64 << 52) as f64 - 1.0)
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}
