//! Portable seeded randomness.
//!
//! Every stochastic step in the crate draws from [`ChaCha8Rng`] (the 8-round
//! ChaCha stream cipher used as a counter-mode generator). Its output for a
//! given 64-bit seed is fixed by the algorithm and identical on every
//! platform. Bounded integers are drawn by rejection sampling on raw
//! `next_u64` output so the mapping from seed to value does not depend on
//! any distribution implementation detail of the `rand` crate.
//!
//! Sub-streams (per image, per coded block) are derived with the SplitMix64
//! finalizer so that results never depend on evaluation order.

use rand::{RngCore, SeedableRng};
pub use rand_chacha::ChaCha8Rng;

/// Seeds a ChaCha8 generator from a 64-bit seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed from a parent seed and a stream index.
pub fn derive(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0x5EED)))
}

/// Derives a sub-seed from a string label (FNV-1a over the UTF-8 bytes).
pub fn derive_str(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    derive(seed, h)
}

/// Uniform integer in `0..n` by rejection sampling. `n` must be non-zero.
pub fn uniform_index<R: RngCore>(rng: &mut R, n: usize) -> usize {
    assert!(n > 0, "uniform_index over an empty range");
    let n = n as u64;
    // Largest multiple of n that fits; values at or above it are rejected.
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// Uniform float in `[0, 1)` with 53 bits of precision.
pub fn unit_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chacha8_golden_stream() {
        // Frozen output of ChaCha8 seeded with 42; any platform or crate
        // change that alters the stream breaks dataset reproducibility.
        let mut rng = seeded(42);
        let got: Vec<u64> = (0..3).map(|_| rng.next_u64()).collect();
        assert_eq!(got, GOLDEN_42);
    }

    const GOLDEN_42: [u64; 3] = [12578764544318200737, 17529487244874322312, 7886285670807131020];

    #[test]
    fn uniform_index_stays_in_range() {
        let mut rng = seeded(7);
        for n in 1..50 {
            for _ in 0..100 {
                assert!(uniform_index(&mut rng, n) < n);
            }
        }
    }

    #[test]
    fn derive_separates_streams() {
        assert_ne!(derive(1, 0), derive(1, 1));
        assert_ne!(derive(1, 0), derive(2, 0));
        assert_eq!(derive_str(9, "img"), derive_str(9, "img"));
    }
}
