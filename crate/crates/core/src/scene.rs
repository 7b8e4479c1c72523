//! Scene descriptions, intentions and channel state.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phy::frame::IMAGE_HEADER_LEN;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("annotation parse error in {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("image width and height must be at least 1, got {width}x{height}")]
    BadDimensions { width: u32, height: u32 },
    #[error("object {index}: bbox {bbox} is outside the {width}x{height} image")]
    BBoxOutOfBounds { index: u32, bbox: BBox, width: u32, height: u32 },
    #[error("object {index}: bbox {bbox} has zero width or height")]
    EmptyBBox { index: u32, bbox: BBox },
    #[error("object {index}: empty category")]
    EmptyCategory { index: u32 },
    #[error("duplicate object index {0}")]
    DuplicateIndex(u32),
}

/// Axis-aligned box, top-left origin, 0-based pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x as usize + self.w as usize <= width
            && self.y as usize + self.h as usize <= height
    }

    /// Center in doubled coordinates, so integer comparison stays exact.
    pub fn center2(&self) -> (u64, u64) {
        (
            2 * u64::from(self.x) + u64::from(self.w),
            2 * u64::from(self.y) + u64::from(self.h),
        )
    }

    pub fn contains(&self, px: usize, py: usize) -> bool {
        px >= self.x as usize
            && py >= self.y as usize
            && px < (self.x + self.w) as usize
            && py < (self.y + self.h) as usize
    }

    pub fn as_usize(&self) -> (usize, usize, usize, usize) {
        (self.x as usize, self.y as usize, self.w as usize, self.h as usize)
    }
}

impl From<[u32; 4]> for BBox {
    fn from(v: [u32; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub index: u32,
    pub category: String,
    pub caption: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub global_caption: String,
    pub objects: Vec<ObjectAnnotation>,
}

impl SceneDescription {
    /// Lowercases categories, then checks every invariant. Nothing is clamped.
    pub fn validated(mut self) -> Result<Self, SceneError> {
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::BadDimensions { width: self.width, height: self.height });
        }
        let mut seen = std::collections::BTreeSet::new();
        for obj in &mut self.objects {
            obj.category = obj.category.trim().to_lowercase();
            if obj.category.is_empty() {
                return Err(SceneError::EmptyCategory { index: obj.index });
            }
            if !seen.insert(obj.index) {
                return Err(SceneError::DuplicateIndex(obj.index));
            }
            if obj.bbox.w == 0 || obj.bbox.h == 0 {
                return Err(SceneError::EmptyBBox { index: obj.index, bbox: obj.bbox });
            }
            if !obj.bbox.fits_in(self.width as usize, self.height as usize) {
                return Err(SceneError::BBoxOutOfBounds {
                    index: obj.index,
                    bbox: obj.bbox,
                    width: self.width,
                    height: self.height,
                });
            }
        }
        Ok(self)
    }

    pub fn image_area(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    /// Distinct categories in first-appearance order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for obj in &self.objects {
            if !out.contains(&obj.category) {
                out.push(obj.category.clone());
            }
        }
        out
    }
}

pub fn parse_scene(text: &str, origin: &str) -> Result<SceneDescription, SceneError> {
    let scene: SceneDescription = serde_json::from_str(text)
        .map_err(|source| SceneError::Parse { path: origin.to_string(), source })?;
    scene.validated()
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneDescription, SceneError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SceneError::Io { path: path.display().to_string(), source })?;
    parse_scene(&text, &path.display().to_string())
}

/// Canonical serialization: pretty JSON with a trailing newline.
pub fn scene_to_string(scene: &SceneDescription) -> String {
    let mut s = serde_json::to_string_pretty(scene).expect("scene serializes");
    s.push('\n');
    s
}

pub fn save_scene(scene: &SceneDescription, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    fs::write(path, scene_to_string(scene)).map_err(|source| SceneError::Io { path: path.display().to_string(), source })
}

/// Three-valued match degree. `High` is ground-truth level 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum MatchLevel {
    Low = 1,
    Medium = 2,
    High = 3,
}

impl MatchLevel {
    pub const ALL: [MatchLevel; 3] = [MatchLevel::Low, MatchLevel::Medium, MatchLevel::High];

    pub fn value(self) -> i32 {
        self as i32
    }

    pub fn as_word(self) -> &'static str {
        match self {
            MatchLevel::Low => "low",
            MatchLevel::Medium => "medium",
            MatchLevel::High => "high",
        }
    }

    pub fn from_word(word: &str) -> Option<Self> {
        match word.trim().to_ascii_lowercase().as_str() {
            "low" => Some(MatchLevel::Low),
            "medium" => Some(MatchLevel::Medium),
            "high" => Some(MatchLevel::High),
            _ => None,
        }
    }
}

impl TryFrom<u8> for MatchLevel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(MatchLevel::Low),
            2 => Ok(MatchLevel::Medium),
            3 => Ok(MatchLevel::High),
            other => Err(format!("match level must be 1, 2 or 3, got {other}")),
        }
    }
}

impl From<MatchLevel> for u8 {
    fn from(l: MatchLevel) -> u8 {
        l as u8
    }
}

impl fmt::Display for MatchLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_word())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub term: String,
    pub level: MatchLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intention {
    pub text: String,
    pub targets: Vec<Target>,
}

impl Intention {
    pub fn level_of(&self, term: &str) -> Option<MatchLevel> {
        self.targets.iter().find(|t| t.term == term).map(|t| t.level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Qam16,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qam16 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Qam16 => "qam16",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qam16" | "qam-16" | "16qam" => Some(Modulation::Qam16),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    /// Es/N0 on unit-energy symbols.
    pub snr_db: f64,
    pub modulation: Modulation,
    pub code_rate: f64,
    /// Post-channel-coding bytes, headers included.
    pub wire_budget_bytes: u64,
}

impl ChannelState {
    pub fn new(snr_db: f64, wire_budget_bytes: u64) -> Self {
        Self { snr_db, modulation: Modulation::Qam16, code_rate: 0.5, wire_budget_bytes }
    }

    pub fn is_valid(&self) -> bool {
        self.code_rate > 0.0 && self.code_rate <= 1.0 && self.wire_budget_bytes >= IMAGE_HEADER_LEN as u64
    }

    pub fn with_budget(self, wire_budget_bytes: u64) -> Self {
        Self { wire_budget_bytes, ..self }
    }
}
