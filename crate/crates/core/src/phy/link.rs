//! Per-block coded transmission: encode → 16-QAM → AWGN → soft demap → BP decode.
//!
//! Every block draws its noise from a seed derived from the frame seed and
//! the block's position, so decoding blocks in parallel gives the same
//! result as decoding them in order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng;

use super::channel::{awgn, noise_variance};
use super::decoder::{decode, DecoderKind, DEFAULT_MAX_ITER};
use super::frame::{Frame, FrameRegion, RegionHeader};
use super::ldpc::LdpcCode;
use super::qam::{qam16_demap, qam16_map};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Es/N0 in dB.
    pub snr_db: f64,
    pub max_iter: u32,
    pub decoder: DecoderKind,
}

impl LinkConfig {
    pub fn new(snr_db: f64) -> Self {
        Self { snr_db, max_iter: DEFAULT_MAX_ITER, decoder: DecoderKind::SumProduct }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockResult {
    pub info: Vec<u8>,
    pub converged: bool,
    pub iterations: u32,
    pub bit_errors: u64,
}

/// Sends one block of exactly `k` information bits.
pub fn send_block(code: &LdpcCode, cfg: &LinkConfig, info: &[u8], seed: u64) -> BlockResult {
    let codeword = code.encode(info).expect("block sized to k");
    let rx = awgn(&qam16_map(&codeword).expect("n is a multiple of 4"), cfg.snr_db, seed);
    let llrs = qam16_demap(&rx, noise_variance(cfg.snr_db));
    let out = decode(code, &llrs, cfg.max_iter, cfg.decoder);
    let bit_errors = out.info.iter().zip(info).filter(|(a, b)| a != b).count() as u64;
    BlockResult { info: out.info, converged: out.converged, iterations: out.iterations, bit_errors }
}

fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes.iter().flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1)).collect()
}

fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8).map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentResult {
    pub bytes: Vec<u8>,
    pub ok: bool,
    pub blocks: Vec<BlockResult>,
}

/// Sends a byte string as zero-padded blocks; block `i` uses noise seed `derive(seed, first_block + i)`.
pub fn send_bytes(code: &LdpcCode, cfg: &LinkConfig, bytes: &[u8], seed: u64, first_block: u64) -> SegmentResult {
    let mut bits = bytes_to_bits(bytes);
    let blocks = bits.len().div_ceil(code.k());
    bits.resize(blocks * code.k(), 0);
    let results: Vec<BlockResult> = bits
        .par_chunks(code.k())
        .enumerate()
        .map(|(i, chunk)| send_block(code, cfg, chunk, rng::derive(seed, first_block + i as u64)))
        .collect();
    let decoded: Vec<u8> = results.iter().flat_map(|r| r.info.iter().copied()).collect();
    let mut out = bits_to_bytes(&decoded);
    out.truncate(bytes.len());
    SegmentResult { ok: results.iter().all(|r| r.converged), bytes: out, blocks: results }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub snr_db: f64,
    pub frames_sent: u64,
    pub blocks: u64,
    pub decode_iterations: Vec<u32>,
    pub unconverged_blocks: u64,
    pub block_errors: u64,
    pub residual_bit_errors: u64,
}

impl ChannelReport {
    fn absorb(&mut self, seg: &SegmentResult) {
        for b in &seg.blocks {
            self.blocks += 1;
            self.decode_iterations.push(b.iterations);
            self.unconverged_blocks += u64::from(!b.converged);
            self.block_errors += u64::from(b.bit_errors > 0);
            self.residual_bit_errors += b.bit_errors;
        }
    }

    pub fn merge(&mut self, other: &ChannelReport) {
        self.frames_sent += other.frames_sent;
        self.blocks += other.blocks;
        self.decode_iterations.extend_from_slice(&other.decode_iterations);
        self.unconverged_blocks += other.unconverged_blocks;
        self.block_errors += other.block_errors;
        self.residual_bit_errors += other.residual_bit_errors;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedRegion {
    pub header: RegionHeader,
    pub payload: Vec<u8>,
    pub lost: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    /// False when the header segment failed; nothing else is usable then.
    pub header_ok: bool,
    pub width: u16,
    pub height: u16,
    pub regions: Vec<ReceivedRegion>,
}

impl ReceivedFrame {
    /// Re-serializes what arrived, lost payloads included as received.
    pub fn to_frame(&self) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            regions: self
                .regions
                .iter()
                .map(|r| FrameRegion { kind: r.header.kind, category_id: r.header.category_id, bbox: r.header.bbox, payload: r.payload.clone() })
                .collect(),
        }
    }
}

/// Sends the header segment, then every region payload in frame order.
pub fn transmit(frame: &Frame, code: &LdpcCode, cfg: &LinkConfig, seed: u64) -> (ReceivedFrame, ChannelReport) {
    let mut report = ChannelReport { snr_db: cfg.snr_db, frames_sent: 1, ..Default::default() };
    let header = frame.header_segment().expect("frame fields fit the layout");
    let head = send_bytes(code, cfg, &header, seed, 0);
    report.absorb(&head);
    let mut next_block = head.blocks.len() as u64;

    let mut payloads = Vec::with_capacity(frame.regions.len());
    for region in &frame.regions {
        let seg = send_bytes(code, cfg, &region.payload, seed, next_block);
        next_block += seg.blocks.len() as u64;
        report.absorb(&seg);
        payloads.push(seg);
    }

    let parsed = if head.ok { Frame::parse_header_segment(&head.bytes).ok() } else { None };
    let consistent = parsed.as_ref().is_some_and(|(_, _, hs)| {
        hs.len() == payloads.len()
            && hs.iter().zip(&payloads).all(|(h, p)| (8 * h.payload_len as usize).div_ceil(code.k()) == p.blocks.len())
    });
    let received = match parsed {
        Some((width, height, headers)) if consistent => ReceivedFrame {
            header_ok: true,
            width,
            height,
            regions: headers
                .into_iter()
                .zip(payloads)
                .map(|(h, p)| ReceivedRegion { header: h, payload: p.bytes, lost: !p.ok })
                .collect(),
        },
        _ => ReceivedFrame { header_ok: false, width: frame.width, height: frame.height, regions: Vec::new() },
    };
    (received, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_packing_round_trips() {
        let bytes = vec![0x00, 0xFF, 0xA5, 0x3C];
        assert_eq!(bits_to_bytes(&bytes_to_bits(&bytes)), bytes);
        assert_eq!(bytes_to_bits(&[0x80])[0], 1);
    }
}
