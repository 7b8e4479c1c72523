//! Wire-cost model: how many post-coding bytes a frame occupies.
//!
//! The header segment (image header plus every region header) and each
//! region payload are coded separately, each padded to whole codewords of
//! `k` information bits and sent as `n` coded bits.

use serde::{Deserialize, Serialize};

use super::frame::{IMAGE_HEADER_LEN, REGION_HEADER_LEN};
use super::ldpc::{CODE_BITS, INFO_BITS};
use super::PhyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeShape {
    pub n: usize,
    pub k: usize,
}

impl Default for CodeShape {
    fn default() -> Self {
        Self { n: CODE_BITS, k: INFO_BITS }
    }
}

impl CodeShape {
    pub fn blocks_for_bits(&self, bits: u64) -> u64 {
        bits.div_ceil(self.k as u64)
    }

    pub fn block_bytes(&self) -> u64 {
        (self.n / 8) as u64
    }

    pub fn header_bits(&self, region_count: usize) -> u64 {
        8 * (IMAGE_HEADER_LEN + REGION_HEADER_LEN * region_count) as u64
    }

    pub fn header_blocks(&self, region_count: usize) -> u64 {
        self.blocks_for_bits(self.header_bits(region_count))
    }

    /// Exact wire bytes of a frame with the given payload lengths (bytes).
    pub fn frame_wire_bytes(&self, payload_lens: &[usize]) -> u64 {
        let payload_blocks: u64 = payload_lens.iter().map(|&len| self.blocks_for_bits(8 * len as u64)).sum();
        (self.header_blocks(payload_lens.len()) + payload_blocks) * self.block_bytes()
    }

    /// Largest wire cost of any split of `source_bits` over `region_count`
    /// payloads: per-region padding can waste up to one block per extra region.
    pub fn wire_cost(&self, source_bits: u64, region_count: usize) -> u64 {
        let payload_blocks = if source_bits == 0 {
            0
        } else {
            self.blocks_for_bits(source_bits) + region_count.saturating_sub(1) as u64
        };
        (self.header_blocks(region_count) + payload_blocks) * self.block_bytes()
    }

    /// Largest source-bit pool whose worst-case wire cost fits `budget_bytes`.
    pub fn source_pool(&self, budget_bytes: u64, region_count: usize) -> Result<u64, PhyError> {
        let total_blocks = budget_bytes / self.block_bytes();
        let header = self.header_blocks(region_count);
        let regions = region_count.max(1) as u64;
        if total_blocks < header + regions {
            return Err(PhyError::BudgetTooSmall {
                budget_bytes,
                needed_bytes: (header + regions) * self.block_bytes(),
            });
        }
        Ok((total_blocks - header - regions + 1) * self.k as u64)
    }
}
