//! Experiment configuration, read from a TOML file. Every field has a default,
//! and the fully resolved configuration is written next to every report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cot::{default_fixed_bits, SimilarityTable, DEFAULT_ALPHA};
use crate::intent::DEFAULT_TEMPLATE;
use crate::kb::{default_grid, DEFAULT_CHANNEL_SEED};
use crate::matcher::ServiceConfig;
use crate::phy::decoder::DEFAULT_MAX_ITER;
use crate::phy::ldpc::{CODE_BITS, DEFAULT_CODE_SEED, INFO_BITS};
use crate::phy::DecoderKind;
use crate::scene::{ChannelState, Modulation};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding `scenes/`, `images/` and `intentions/`.
    pub corpus: PathBuf,
    /// Synonym lexicon JSON; empty means the bundled one.
    pub lexicon: PathBuf,
    pub kb: PathBuf,
    pub output: PathBuf,
    /// Directory of prompt section files for the service matcher; empty means bundled.
    pub prompts: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: "corpus".into(),
            lexicon: PathBuf::new(),
            kb: "kb.csv".into(),
            output: "runs/default".into(),
            prompts: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Es/N0 on unit-energy symbols.
    pub snr_db: f64,
    pub modulation: Modulation,
    pub ldpc_k: usize,
    pub ldpc_n: usize,
    /// Post-coding bytes per image, headers included.
    pub wire_budget_bytes: u64,
    pub max_iter: u32,
    pub decoder: DecoderKind,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            snr_db: 20.0,
            modulation: Modulation::Qam16,
            ldpc_k: INFO_BITS,
            ldpc_n: CODE_BITS,
            wire_budget_bytes: 10_000,
            max_iter: DEFAULT_MAX_ITER,
            decoder: DecoderKind::SumProduct,
        }
    }
}

impl ChannelConfig {
    pub fn state(&self) -> ChannelState {
        ChannelState {
            snr_db: self.snr_db,
            modulation: self.modulation,
            code_rate: self.ldpc_k as f64 / self.ldpc_n as f64,
            wire_budget_bytes: self.wire_budget_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocatorSection {
    pub alpha: f64,
    pub similarity_table: SimilarityTable,
    pub fixed_bits: [u64; 9],
    pub min_region_bits: u64,
}

impl Default for AllocatorSection {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            similarity_table: SimilarityTable::default(),
            fixed_bits: default_fixed_bits(),
            min_region_bits: crate::codec::MIN_BUDGET_BITS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherMode {
    /// Direct calls into the lexical matcher.
    Scripted,
    /// HTTP calls to an external model endpoint.
    Service,
    /// The service protocol answered in-process by the lexical matcher.
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherSection {
    pub mode: MatcherMode,
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub top_k: u32,
    pub vote_count: u32,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for MatcherSection {
    fn default() -> Self {
        let s = ServiceConfig::default();
        Self {
            mode: MatcherMode::Scripted,
            endpoint: s.endpoint,
            model_name: s.model_name,
            temperature: s.temperature,
            top_k: s.top_k,
            vote_count: s.vote_count,
            timeout_secs: s.timeout_secs,
            retries: s.retries,
        }
    }
}

impl MatcherSection {
    pub fn service_config(&self) -> ServiceConfig {
        ServiceConfig {
            endpoint: self.endpoint.clone(),
            model_name: self.model_name.clone(),
            temperature: self.temperature,
            top_k: self.top_k,
            vote_count: self.vote_count,
            timeout_secs: self.timeout_secs,
            retries: self.retries,
            ..ServiceConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Normal,
    NoVoting,
    NoKb,
}

impl AblationMode {
    pub fn name(self) -> &'static str {
        match self {
            AblationMode::Normal => "normal",
            AblationMode::NoVoting => "no_voting",
            AblationMode::NoKb => "no_kb",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normal" => Some(Self::Normal),
            "no_voting" => Some(Self::NoVoting),
            "no_kb" => Some(Self::NoKb),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub dataset: u64,
    pub intent: u64,
    pub channel: u64,
    pub code: u64,
    pub calibration: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { dataset: 1, intent: 2, channel: 3, code: DEFAULT_CODE_SEED, calibration: DEFAULT_CHANNEL_SEED }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub images: usize,
    pub width: u32,
    pub height: u32,
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_object_size: u32,
    pub max_object_size: u32,
    pub intention_template: String,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            images: 24,
            width: 640,
            height: 480,
            min_objects: 2,
            max_objects: 4,
            min_object_size: 96,
            max_object_size: 224,
            intention_template: DEFAULT_TEMPLATE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub bit_grid: Vec<u64>,
    pub crops_per_category: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self { bit_grid: default_grid(), crops_per_category: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub channel: ChannelConfig,
    pub allocator: AllocatorSection,
    pub matcher: MatcherSection,
    pub ablation: AblationMode,
    pub seeds: Seeds,
    pub corpus: CorpusSection,
    pub calibration: CalibrationSection,
    /// Wire budgets (bytes) for the sweep command.
    pub sweep_budgets: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            channel: ChannelConfig::default(),
            allocator: AllocatorSection::default(),
            matcher: MatcherSection::default(),
            ablation: AblationMode::Normal,
            seeds: Seeds::default(),
            corpus: CorpusSection::default(),
            calibration: CalibrationSection::default(),
            sweep_budgets: vec![5_000, 10_000, 20_000],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative paths in the file are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.corpus, &mut cfg.paths.lexicon, &mut cfg.paths.kb, &mut cfg.paths.output, &mut cfg.paths.prompts] {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if (self.channel.ldpc_k, self.channel.ldpc_n) != (INFO_BITS, CODE_BITS) {
            return bad(format!("only LDPC({CODE_BITS},{INFO_BITS}) is built, got ({},{})", self.channel.ldpc_n, self.channel.ldpc_k));
        }
        if !(0.0..=1.0).contains(&self.allocator.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.allocator.alpha));
        }
        if self.allocator.similarity_table.validate().is_err() {
            return bad("similarity_table must be non-decreasing".into());
        }
        if self.matcher.vote_count == 0 || self.matcher.vote_count % 2 == 0 {
            return bad(format!("vote_count {} must be odd", self.matcher.vote_count));
        }
        let c = &self.corpus;
        if c.min_objects > c.max_objects || c.min_object_size > c.max_object_size || c.min_object_size == 0 {
            return bad("corpus object ranges are inverted or empty".into());
        }
        if self.calibration.bit_grid.is_empty() || self.calibration.bit_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("calibration.bit_grid must be strictly increasing".into());
        }
        if self.sweep_budgets.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sweep_budgets must be ascending".into());
        }
        Ok(())
    }
}
