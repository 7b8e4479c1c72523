//! Additive white Gaussian noise on unit-energy complex symbols.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::rng;

/// Total complex noise power N0 for a given Es/N0 in dB.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Es/N0 for a given Eb/N0, spreading each info bit over `bits_per_symbol * rate`.
pub fn esn0_from_ebn0(ebn0_db: f64, bits_per_symbol: usize, rate: f64) -> f64 {
    ebn0_db + 10.0 * (bits_per_symbol as f64 * rate).log10()
}

/// Adds circular Gaussian noise with per-component variance N0/2.
pub fn awgn(symbols: &[Complex64], snr_db: f64, seed: u64) -> Vec<Complex64> {
    let sigma = (noise_variance(snr_db) / 2.0).sqrt();
    let mut r = rng::seeded(seed);
    symbols
        .iter()
        .map(|s| {
            let re: f64 = StandardNormal.sample(&mut r);
            let im: f64 = StandardNormal.sample(&mut r);
            s + Complex64::new(re * sigma, im * sigma)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn very_high_snr_is_transparent() {
        let x = vec![Complex64::new(0.3, -0.9); 64];
        let y = awgn(&x, 300.0, 1);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn empirical_noise_power_matches() {
        let snr = 7.0;
        let x = vec![Complex64::new(0.0, 0.0); 500_000];
        let y = awgn(&x, snr, 2);
        let power: f64 = y.iter().map(|s| s.norm_sqr()).sum::<f64>() / y.len() as f64;
        let expected = noise_variance(snr);
        assert!((power / expected - 1.0).abs() < 0.01, "{power} vs {expected}");
    }

    #[test]
    fn seeded_noise_repeats() {
        let x = vec![Complex64::new(1.0, 0.0); 32];
        assert_eq!(awgn(&x, 10.0, 5), awgn(&x, 10.0, 5));
        assert_ne!(awgn(&x, 10.0, 5), awgn(&x, 10.0, 6));
    }

    #[test]
    fn ebn0_conversion_for_rate_half_qam16() {
        assert!((esn0_from_ebn0(6.0, 4, 0.5) - (6.0 + 10.0 * 2f64.log10())).abs() < 1e-12);
    }
}
