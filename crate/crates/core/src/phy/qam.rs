//! Gray-mapped 16-QAM with exact (log-sum-exp) soft demapping.
//!
//! Each symbol carries four bits: the first two select the in-phase level,
//! the last two the quadrature level, each through the Gray sequence
//! 00 → -3, 01 → -1, 11 → +1, 10 → +3. Levels are scaled by 1/sqrt(10) for
//! unit average energy.

use num_complex::Complex64;

use super::PhyError;

pub const BITS_PER_SYMBOL: usize = 4;

/// Levels indexed by the two-bit label `2*b0 + b1`.
const LEVELS: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];

fn scale() -> f64 {
    1.0 / 10f64.sqrt()
}

fn axis_level(b0: u8, b1: u8) -> f64 {
    LEVELS[usize::from(b0 & 1) * 2 + usize::from(b1 & 1)] * scale()
}

pub fn qam16_map(bits: &[u8]) -> Result<Vec<Complex64>, PhyError> {
    if bits.len() % BITS_PER_SYMBOL != 0 {
        return Err(PhyError::Length { expected: bits.len().next_multiple_of(BITS_PER_SYMBOL), got: bits.len() });
    }
    Ok(bits
        .chunks_exact(BITS_PER_SYMBOL)
        .map(|b| Complex64::new(axis_level(b[0], b[1]), axis_level(b[2], b[3])))
        .collect())
}

/// All 16 points with their 4-bit labels (MSB first).
pub fn constellation() -> Vec<(u8, Complex64)> {
    (0u8..16)
        .map(|label| {
            let b = [(label >> 3) & 1, (label >> 2) & 1, (label >> 1) & 1, label & 1];
            (label, qam16_map(&b).expect("4 bits")[0])
        })
        .collect()
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// LLRs for the two bits carried by one axis; `var` is the per-axis noise variance.
fn axis_llrs(y: f64, var: f64) -> [f64; 2] {
    let metric = |label: usize| {
        let d = y - LEVELS[label] * scale();
        -d * d / (2.0 * var)
    };
    let m: [f64; 4] = std::array::from_fn(metric);
    // label bits: 0 → 00, 1 → 01, 2 → 10, 3 → 11
    let b0_zero = log_sum_exp(m[0], m[1]);
    let b0_one = log_sum_exp(m[2], m[3]);
    let b1_zero = log_sum_exp(m[0], m[2]);
    let b1_one = log_sum_exp(m[1], m[3]);
    [b0_zero - b0_one, b1_zero - b1_one]
}

/// Exact per-bit LLRs (positive favours 0). `noise_variance` is the total
/// complex noise power N0, split evenly between the two axes.
pub fn qam16_demap(symbols: &[Complex64], noise_variance: f64) -> Vec<f64> {
    let var = (noise_variance / 2.0).max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(symbols.len() * BITS_PER_SYMBOL);
    for s in symbols {
        out.extend_from_slice(&axis_llrs(s.re, var));
        out.extend_from_slice(&axis_llrs(s.im, var));
    }
    out
}

/// Minimum-distance hard decisions, used for the uncoded reference path.
pub fn qam16_hard(symbols: &[Complex64]) -> Vec<u8> {
    let nearest = |y: f64| {
        let label = (0..4)
            .min_by(|&a, &b| (y - LEVELS[a] * scale()).abs().total_cmp(&(y - LEVELS[b] * scale()).abs()))
            .expect("four levels");
        [(label >> 1) as u8, (label & 1) as u8]
    };
    symbols.iter().flat_map(|s| nearest(s.re).into_iter().chain(nearest(s.im))).collect()
}
