//! Experiment driver: corpus synthesis, per-image pipeline, comparisons,
//! sweeps, ablations and the on-disk run layout.

pub mod config;
pub mod corpus;
pub mod pipeline;
pub mod report;
pub mod synth;

use std::fmt::Display;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{AblationMode, ExperimentConfig, MatcherMode};
pub use corpus::CorpusItem;
pub use pipeline::{run_image, Context, ImageOutcome, Method};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("image {image}, {stage}: {msg}")]
    Stage { image: String, stage: String, msg: String },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub fn stage(image: &str, stage: &str, err: impl Display) -> Self {
        HarnessError::Stage { image: image.to_string(), stage: stage.to_string(), msg: err.to_string() }
    }
}
