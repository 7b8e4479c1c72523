//! Intention-aware image transmission simulator.
//!
//! A scene description and an intention go in; objects are scored against the
//! intention, a wire-byte budget is split across image regions using a
//! rate-distortion knowledge base, regions travel over an LDPC / 16-QAM / AWGN
//! link, and the reassembled image is scored with intention-masked metrics.

pub mod codec;
pub mod cot;
pub mod eval;
pub mod harness;
pub mod image;
pub mod intent;
pub mod kb;
pub mod matcher;
pub mod phy;
pub mod rng;
pub mod scene;
pub mod text;
