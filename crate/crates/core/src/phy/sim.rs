//! Monte Carlo bit-error-rate estimation for the coded and uncoded paths.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng;

use super::channel::{awgn, esn0_from_ebn0};
use super::ldpc::LdpcCode;
use super::link::{send_block, LinkConfig};
use super::qam::{qam16_hard, qam16_map, BITS_PER_SYMBOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerStats {
    pub bits: u64,
    pub errors: u64,
    pub blocks: u64,
    pub block_errors: u64,
    /// Sum of squared per-block error counts, for a block-clustered variance.
    pub errors_sq: u64,
}

impl BerStats {
    pub fn ber(&self) -> f64 {
        self.errors as f64 / self.bits.max(1) as f64
    }

    /// Standard error of the BER estimate. Coded errors cluster inside
    /// blocks, so the per-block error counts are the samples there.
    pub fn std_err(&self) -> f64 {
        if self.blocks > 1 {
            let n = self.blocks as f64;
            let mean = self.errors as f64 / n;
            let var = (self.errors_sq as f64 - n * mean * mean) / (n - 1.0);
            let bits_per_block = self.bits as f64 / n;
            return var.max(0.0).sqrt() / n.sqrt() / bits_per_block;
        }
        let p = self.ber();
        (p * (1.0 - p) / self.bits.max(1) as f64).sqrt()
    }

    /// 95% two-sided confidence interval.
    pub fn ci95(&self) -> (f64, f64) {
        let h = 1.96 * self.std_err();
        ((self.ber() - h).max(0.0), self.ber() + h)
    }
}

fn random_bits(n: usize, seed: u64) -> Vec<u8> {
    let mut r = rng::seeded(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = r.next_u64();
        out.extend((0..64).map(|i| ((w >> i) & 1) as u8).take(n - out.len()));
    }
    out
}

/// Coded BER at a given Eb/N0 (information bits), over `blocks` random codewords.
pub fn coded_ber(code: &LdpcCode, ebn0_db: f64, blocks: u64, max_iter: u32, seed: u64) -> BerStats {
    let snr = esn0_from_ebn0(ebn0_db, BITS_PER_SYMBOL, code.rate());
    let cfg = LinkConfig { max_iter, ..LinkConfig::new(snr) };
    let results: Vec<u64> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let info = random_bits(code.k(), rng::derive(seed, 2 * b));
            let r = send_block(code, &cfg, &info, rng::derive(seed, 2 * b + 1));
            r.bit_errors
        })
        .collect();
    BerStats {
        bits: blocks * code.k() as u64,
        errors: results.iter().sum(),
        blocks,
        block_errors: results.iter().filter(|&&e| e > 0).count() as u64,
        errors_sq: results.iter().map(|e| e * e).sum(),
    }
}

/// Uncoded hard-decision 16-QAM BER at the same Eb/N0 (one info bit per coded bit).
pub fn uncoded_ber(ebn0_db: f64, bits: usize, seed: u64) -> BerStats {
    let snr = esn0_from_ebn0(ebn0_db, BITS_PER_SYMBOL, 1.0);
    let chunk = 1 << 16;
    let chunks = bits.div_ceil(chunk);
    let errors: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = chunk.min(bits - c * chunk);
            let tx = random_bits(len, rng::derive(seed, 2 * c as u64));
            let mut padded = tx.clone();
            padded.resize(len.next_multiple_of(BITS_PER_SYMBOL), 0);
            let rx = awgn(&qam16_map(&padded).expect("padded"), snr, rng::derive(seed, 2 * c as u64 + 1));
            qam16_hard(&rx).iter().zip(&tx).filter(|(a, b)| a != b).count() as u64
        })
        .sum();
    BerStats { bits: bits as u64, errors, blocks: 0, block_errors: 0, errors_sq: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncoded_matches_closed_form() {
        // Gray 16-QAM: BER ≈ (3/4)·Q(sqrt(4/5 · Eb/N0)) for each axis bit pair, averaged.
        let ebn0 = 10f64.powf(0.6);
        let q = |x: f64| 0.5 * erfc(x / std::f64::consts::SQRT_2);
        let a = (0.8 * ebn0).sqrt();
        let theory = 0.75 * q(a) + 0.5 * q(3.0 * a) - 0.25 * q(5.0 * a);
        let got = uncoded_ber(6.0, 400_000, 3).ber();
        assert!((got - theory).abs() < 0.002, "{got} vs {theory}");
    }

    // Abramowitz-Stegun 7.1.26; accurate to ~1e-7, plenty for a 1e-3 tolerance.
    fn erfc(x: f64) -> f64 {
        let t = 1.0 / (1.0 + 0.327_591_1 * x);
        let poly = t * (0.254_829_592 + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
        poly * (-x * x).exp()
    }

    #[test]
    fn clustered_std_err_uses_blocks() {
        let s = BerStats { bits: 300, errors: 30, blocks: 3, block_errors: 1, errors_sq: 900 };
        // Per-block counts 30, 0, 0: sample sd = sqrt(300), over sqrt(3) blocks of 100 bits.
        assert!((s.std_err() - (300f64).sqrt() / 3f64.sqrt() / 100.0).abs() < 1e-12);
    }
}
