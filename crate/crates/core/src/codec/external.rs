//! Shell-out adapter for an external still-image codec (e.g. `bpgenc`/`bpgdec`).
//!
//! The encoder is run as `<encoder> <quality_flag> <q> -o <out> <in.ppm>` and the
//! decoder as `<decoder> -o <out.ppm> <in>`. Lower `q` is assumed to mean higher
//! quality, as with BPG's quantizer parameter.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::image::RasterImage;

use super::{CodecError, MAX_RATE_ITERATIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalCodec {
    pub encoder: PathBuf,
    pub decoder: PathBuf,
    pub quality_flag: String,
    /// Best (smallest) and worst (largest) quantizer values to search between.
    pub q_best: u32,
    pub q_worst: u32,
}

impl Default for ExternalCodec {
    fn default() -> Self {
        Self { encoder: "bpgenc".into(), decoder: "bpgdec".into(), quality_flag: "-q".into(), q_best: 0, q_worst: 51 }
    }
}

struct Scratch(PathBuf);

impl Scratch {
    fn new() -> std::io::Result<Self> {
        static COUNTER: AtomicU64 = AtomicU64::new(0);
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        let dir = std::env::temp_dir().join(format!("pace-ext-{}-{n}", std::process::id()));
        std::fs::create_dir_all(&dir)?;
        Ok(Self(dir))
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn io(e: std::io::Error) -> CodecError {
    CodecError::External(e.to_string())
}

fn run(cmd: &mut Command) -> Result<(), CodecError> {
    let out = cmd.output().map_err(|e| CodecError::External(format!("{:?}: {e}", cmd.get_program())))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(CodecError::External(format!(
            "{:?} exited with {}: {}",
            cmd.get_program(),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )))
    }
}

impl ExternalCodec {
    fn encode_at(&self, input: &Path, dir: &Path, q: u32) -> Result<Vec<u8>, CodecError> {
        let out = dir.join(format!("q{q}.bin"));
        run(Command::new(&self.encoder).arg(&self.quality_flag).arg(q.to_string()).arg("-o").arg(&out).arg(input))?;
        std::fs::read(&out).map_err(io)
    }

    /// Best quality whose output fits; `None` when even `q_worst` overflows.
    pub fn encode(&self, patch: &RasterImage, budget_bits: u64) -> Result<Option<(u32, Vec<u8>)>, CodecError> {
        let scratch = Scratch::new().map_err(io)?;
        let input = scratch.0.join("in.ppm");
        std::fs::write(&input, patch.to_ppm()).map_err(io)?;
        let fits = |bytes: &Vec<u8>| 8 * bytes.len() as u64 <= budget_bits;

        let best = self.encode_at(&input, &scratch.0, self.q_best)?;
        if fits(&best) {
            return Ok(Some((self.q_best, best)));
        }
        let worst = self.encode_at(&input, &scratch.0, self.q_worst)?;
        if !fits(&worst) {
            return Ok(None);
        }
        // `hi` fits, `lo` does not.
        let (mut lo, mut hi, mut keep) = (self.q_best, self.q_worst, worst);
        for _ in 2..MAX_RATE_ITERATIONS {
            if hi - lo <= 1 {
                break;
            }
            let mid = lo + (hi - lo) / 2;
            let bytes = self.encode_at(&input, &scratch.0, mid)?;
            if fits(&bytes) {
                hi = mid;
                keep = bytes;
            } else {
                lo = mid;
            }
        }
        Ok(Some((hi, keep)))
    }

    pub fn decode(&self, stream: &[u8]) -> Result<RasterImage, CodecError> {
        let scratch = Scratch::new().map_err(io)?;
        let input = scratch.0.join("in.bin");
        let output = scratch.0.join("out.ppm");
        std::fs::write(&input, stream).map_err(io)?;
        run(Command::new(&self.decoder).arg("-o").arg(&output).arg(&input))?;
        let bytes = std::fs::read(&output).map_err(io)?;
        RasterImage::from_ppm(&bytes).map_err(|e| CodecError::External(e.to_string()))
    }
}
