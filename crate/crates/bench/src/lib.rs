//! Shared inputs for the benchmark targets.

/// Odd moduli spanning the sizes the series produce, from well below the
/// Montgomery crossover to near the 2^63 cap.
pub fn sample_moduli() -> Vec<u64> {
    vec![
        9,
        257,
        65_521,
        65_537,
        1 << 20 | 1,
        1_000_000_007,
        (1 << 40) + 5,
        (1 << 62) + 9,
    ]
}

/// A deterministic exponent sweep shaped like head-term exponents.
pub fn sample_exponents() -> Vec<u64> {
    (0..64).map(|i| (1u64 << (i % 50)).wrapping_add(i * 977)).collect()
}
