//! Flooding belief-propagation decoder in the LLR domain.
//!
//! Positive LLR means bit 0. The decoder stops as soon as the hard decision
//! satisfies every check and no posterior is exactly zero (an all-zero
//! input is a pure erasure and never counts as converged).

use serde::{Deserialize, Serialize};

use super::ldpc::LdpcCode;

pub const DEFAULT_MAX_ITER: u32 = 50;
const LLR_CLAMP: f64 = 40.0;
const TANH_CLAMP: f64 = 1.0 - 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    #[default]
    SumProduct,
    OffsetMinSum {
        offset: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub info: Vec<u8>,
    pub converged: bool,
    pub iterations: u32,
}

/// Edge ids of each variable, edges being numbered check by check.
fn var_edges(code: &LdpcCode) -> Vec<Vec<u32>> {
    let mut var_edges = vec![Vec::new(); code.n()];
    let mut e = 0u32;
    for vs in code.checks() {
        for &v in vs {
            var_edges[v as usize].push(e);
            e += 1;
        }
    }
    var_edges
}

fn hard(posterior: &[f64], out: &mut [u8]) {
    for (b, &l) in out.iter_mut().zip(posterior) {
        *b = u8::from(l < 0.0);
    }
}

fn settled(code: &LdpcCode, posterior: &[f64], bits: &[u8]) -> bool {
    posterior.iter().all(|&l| l != 0.0) && code.syndrome_weight(bits) == 0
}

pub fn decode(code: &LdpcCode, llrs: &[f64], max_iter: u32, kind: DecoderKind) -> DecodeOutcome {
    assert_eq!(llrs.len(), code.n(), "decoder needs one LLR per code bit");
    let channel: Vec<f64> = llrs.iter().map(|l| l.clamp(-LLR_CLAMP, LLR_CLAMP)).collect();
    let mut bits = vec![0u8; code.n()];
    hard(&channel, &mut bits);
    if settled(code, &channel, &bits) {
        return DecodeOutcome { info: bits[..code.k()].to_vec(), converged: true, iterations: 0 };
    }

    let var_edges = var_edges(code);
    let edges: usize = code.checks().iter().map(Vec::len).sum();
    let mut c2v = vec![0.0f64; edges];
    let mut v2c = vec![0.0f64; edges];
    let mut posterior = channel.clone();
    let mut scratch = Vec::new();

    for iter in 1..=max_iter {
        // Variable to check: posterior minus the incoming message on that edge.
        for (v, es) in var_edges.iter().enumerate() {
            for &e in es {
                v2c[e as usize] = posterior[v] - c2v[e as usize];
            }
        }
        // Check to variable.
        let mut e0 = 0;
        for vs in code.checks() {
            let deg = vs.len();
            let msgs = &v2c[e0..e0 + deg];
            let out = &mut c2v[e0..e0 + deg];
            match kind {
                DecoderKind::SumProduct => check_sum_product(msgs, out, &mut scratch),
                DecoderKind::OffsetMinSum { offset } => check_min_sum(msgs, out, offset),
            }
            e0 += deg;
        }
        for (v, es) in var_edges.iter().enumerate() {
            let total = channel[v] + es.iter().map(|&e| c2v[e as usize]).sum::<f64>();
            posterior[v] = total;
        }
        hard(&posterior, &mut bits);
        if settled(code, &posterior, &bits) {
            return DecodeOutcome { info: bits[..code.k()].to_vec(), converged: true, iterations: iter };
        }
    }
    DecodeOutcome { info: bits[..code.k()].to_vec(), converged: false, iterations: max_iter }
}

/// tanh rule with prefix/suffix products, so a zero input does not poison the others.
fn check_sum_product(msgs: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
    let deg = msgs.len();
    scratch.clear();
    scratch.extend(msgs.iter().map(|&m| (m * 0.5).tanh()));
    let t = &scratch[..];
    let mut prefix = 1.0;
    for i in 0..deg {
        out[i] = prefix;
        prefix *= t[i];
    }
    let mut suffix = 1.0;
    for i in (0..deg).rev() {
        let p = (out[i] * suffix).clamp(-TANH_CLAMP, TANH_CLAMP);
        out[i] = 2.0 * p.atanh();
        suffix *= t[i];
    }
}

fn check_min_sum(msgs: &[f64], out: &mut [f64], offset: f64) {
    let mut sign = 1.0f64;
    let (mut min1, mut min2, mut arg) = (f64::INFINITY, f64::INFINITY, 0);
    for (i, &m) in msgs.iter().enumerate() {
        if m < 0.0 {
            sign = -sign;
        }
        let a = m.abs();
        if a < min1 {
            min2 = min1;
            min1 = a;
            arg = i;
        } else if a < min2 {
            min2 = a;
        }
    }
    for (i, (o, &m)) in out.iter_mut().zip(msgs).enumerate() {
        let mag = if i == arg { min2 } else { min1 };
        let s = if m < 0.0 { -sign } else { sign };
        *o = s * (mag - offset).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::RngCore;

    fn llrs_for(codeword: &[u8], mag: f64) -> Vec<f64> {
        codeword.iter().map(|&b| if b == 0 { mag } else { -mag }).collect()
    }

    #[test]
    fn noiseless_codeword_converges_immediately() {
        let code = LdpcCode::build(96, 48, 3, 5).unwrap();
        let mut r = rng::seeded(1);
        let u: Vec<u8> = (0..48).map(|_| (r.next_u32() & 1) as u8).collect();
        let c = code.encode(&u).unwrap();
        let out = decode(&code, &llrs_for(&c, 10.0), 50, DecoderKind::SumProduct);
        assert!(out.converged && out.iterations <= 1);
        assert_eq!(out.info, u);
    }

    #[test]
    fn one_flip_is_corrected_by_both_variants() {
        let code = LdpcCode::build(200, 100, 3, 8).unwrap();
        let mut r = rng::seeded(2);
        let u: Vec<u8> = (0..100).map(|_| (r.next_u32() & 1) as u8).collect();
        let c = code.encode(&u).unwrap();
        let mut l: Vec<f64> = llrs_for(&c, 4.0);
        l[17] = -l[17] * 0.5;
        for kind in [DecoderKind::SumProduct, DecoderKind::OffsetMinSum { offset: 0.5 }] {
            let out = decode(&code, &l, 50, kind);
            assert!(out.converged, "{kind:?}");
            assert_eq!(out.info, u);
        }
    }

    #[test]
    fn all_zero_llrs_never_converge() {
        let code = LdpcCode::build(96, 48, 3, 5).unwrap();
        let out = decode(&code, &vec![0.0; 96], 10, DecoderKind::SumProduct);
        assert!(!out.converged);
        assert_eq!(out.iterations, 10);
    }
}
