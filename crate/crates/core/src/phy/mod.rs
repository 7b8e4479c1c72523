//! Physical layer: LDPC(6144, 3072), Gray 16-QAM, AWGN, framing and wire cost.

pub mod channel;
pub mod cost;
pub mod decoder;
pub mod frame;
pub mod ldpc;
pub mod link;
pub mod qam;
pub mod sim;

use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

pub use cost::CodeShape;
pub use decoder::{decode, DecodeOutcome, DecoderKind};
pub use frame::{Frame, FrameRegion, RegionHeader, RegionKind};
pub use ldpc::{build_code, LdpcCode};
pub use link::{transmit, ChannelReport, LinkConfig, ReceivedFrame};

#[derive(Debug, Error)]
pub enum PhyError {
    #[error("expected {expected} bits, got {got}")]
    Length { expected: usize, got: usize },
    #[error("code construction failed: {0}")]
    Construction(String),
    #[error("frame truncated")]
    Truncated,
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("frame field out of range: {0}")]
    FieldRange(String),
    #[error("wire budget of {budget_bytes} bytes is below the {needed_bytes} bytes needed for headers and one block per region")]
    BudgetTooSmall { budget_bytes: u64, needed_bytes: u64 },
}

/// Process-wide cache of built codes; construction of the full-size code takes a while.
pub fn shared_code(seed: u64) -> Result<Arc<LdpcCode>, PhyError> {
    static CACHE: OnceLock<Mutex<Vec<Arc<LdpcCode>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
    let mut guard = cache.lock().expect("code cache poisoned");
    if let Some(code) = guard.iter().find(|c| c.seed() == seed) {
        return Ok(Arc::clone(code));
    }
    let code = Arc::new(build_code(seed)?);
    guard.push(Arc::clone(&code));
    Ok(code)
}
