//! Rate-distortion knowledge base: per-category curves of source bits against
//! mean PSNR after the simulated channel, and target-PSNR → bit-length queries.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_region, encode_region, CodecError, MID_GRAY};
use crate::eval::psnr;
use crate::image::RasterImage;
use crate::phy::link::{send_bytes, LinkConfig};
use crate::phy::LdpcCode;
use crate::rng;
use crate::scene::{BBox, ChannelState, Modulation};

pub const KB_VERSION: u32 = 1;
pub const FALLBACK: &str = "*";
pub const CSV_HEADER: &str = "category,snr_db,modulation,code_rate,source_bits,mean_psnr_db";
pub const DEFAULT_CHANNEL_SEED: u64 = 0x6B62_0000_0000_0001;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("category {0:?} has no calibration crops")]
    EmptyCrops(String),
    #[error("bit grid must be non-empty and strictly increasing")]
    BadGrid,
    #[error("codec failed for {category:?} at {bits} bits: {source}")]
    Codec { category: String, bits: u64, source: CodecError },
    #[error("no curve for channel {0}")]
    UnknownChannel(ChannelKey),
    #[error("kb file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("kb file version {found:?}, expected {KB_VERSION}")]
    VersionMismatch { found: String },
    #[error("kb file line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

/// The part of the channel state a curve depends on.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelKey {
    pub snr_db: f64,
    pub modulation: Modulation,
    pub code_rate: f64,
}

impl ChannelKey {
    pub fn of(ch: &ChannelState) -> Self {
        Self { snr_db: ch.snr_db, modulation: ch.modulation, code_rate: ch.code_rate }
    }
}

impl PartialEq for ChannelKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ChannelKey {}

impl PartialOrd for ChannelKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ChannelKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.snr_db
            .total_cmp(&other.snr_db)
            .then(self.modulation.name().cmp(other.modulation.name()))
            .then(self.code_rate.total_cmp(&other.code_rate))
    }
}

impl std::fmt::Display for ChannelKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "snr={} dB {} rate={}", self.snr_db, self.modulation.name(), self.code_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdCurve {
    pub category: String,
    pub key: ChannelKey,
    /// (source_bits, mean_psnr_db), bits strictly increasing, PSNR non-decreasing.
    pub points: Vec<(u64, f64)>,
}

impl RdCurve {
    /// Smallest bit length on the curve reaching `target`, by clamped linear interpolation.
    pub fn bits_for(&self, target_psnr: f64) -> u64 {
        let pts = &self.points;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if target_psnr <= first.1 {
            return first.0;
        }
        if target_psnr >= last.1 {
            return pts.iter().find(|p| p.1 >= last.1).map_or(last.0, |p| p.0);
        }
        let i = pts.iter().position(|p| p.1 >= target_psnr).expect("bracketed by last point");
        let (b1, p1) = pts[i];
        if p1 == target_psnr {
            return b1;
        }
        let (b0, p0) = pts[i - 1];
        let bits = b0 as f64 + (target_psnr - p0) / (p1 - p0) * (b1 - b0) as f64;
        (bits.ceil() as u64).clamp(b0, b1)
    }
}

/// Pool-adjacent-violators fit of a non-decreasing sequence (equal weights).
pub fn isotonic(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (v2, n2) = blocks.pop().expect("len > 1");
            let (v1, n1) = blocks.pop().expect("len > 1");
            blocks.push(((v1 * n1 as f64 + v2 * n2 as f64) / (n1 + n2) as f64, n1 + n2));
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    pub channel_seed: u64,
    curves: BTreeMap<(String, ChannelKey), RdCurve>,
}

impl KnowledgeBase {
    pub fn new(channel_seed: u64) -> Self {
        Self { channel_seed, curves: BTreeMap::new() }
    }

    pub fn insert(&mut self, curve: RdCurve) {
        self.curves.insert((curve.category.clone(), curve.key), curve);
    }

    pub fn curve(&self, category: &str, key: &ChannelKey) -> Option<&RdCurve> {
        self.curves.get(&(category.to_string(), *key))
    }

    pub fn curves(&self) -> impl Iterator<Item = &RdCurve> {
        self.curves.values()
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Bit length for a target PSNR; unknown categories use the fallback curve.
    pub fn query_bits(&self, category: &str, channel: &ChannelState, target_psnr: f64) -> Result<u64, KbError> {
        let key = ChannelKey::of(channel);
        self.curve(category, &key)
            .or_else(|| self.curve(FALLBACK, &key))
            .map(|c| c.bits_for(target_psnr))
            .ok_or(KbError::UnknownChannel(key))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# pace-kb version={KB_VERSION} channel_seed={}\n{CSV_HEADER}\n", self.channel_seed);
        for c in self.curves.values() {
            for (bits, p) in &c.points {
                let _ = writeln!(out, "{},{},{},{},{bits},{p}", c.category, c.key.snr_db, c.key.modulation.name(), c.key.code_rate);
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, KbError> {
        let mut lines = text.lines();
        let meta = lines.next().unwrap_or_default();
        let fields: BTreeMap<&str, &str> = meta
            .strip_prefix("# pace-kb")
            .ok_or(KbError::Malformed { line: 1, msg: "missing version comment".into() })?
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let version = fields.get("version").copied().unwrap_or("");
        if version != KB_VERSION.to_string() {
            return Err(KbError::VersionMismatch { found: version.to_string() });
        }
        let channel_seed = fields
            .get("channel_seed")
            .and_then(|s| s.parse().ok())
            .ok_or(KbError::Malformed { line: 1, msg: "missing channel_seed".into() })?;

        let body: String = lines.collect::<Vec<_>>().join("\n");
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| KbError::Malformed { line: 2, msg: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        if header.join(",") != CSV_HEADER {
            return Err(KbError::Malformed { line: 2, msg: format!("header {:?}", header.join(",")) });
        }
        let mut grouped: BTreeMap<(String, ChannelKey), Vec<(u64, f64)>> = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 3;
            let bad = |msg: String| KbError::Malformed { line, msg };
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != 6 {
                return Err(bad(format!("{} fields", rec.len())));
            }
            let num = |j: usize| rec[j].parse::<f64>().map_err(|_| bad(format!("bad number {:?}", &rec[j])));
            let key = ChannelKey {
                snr_db: num(1)?,
                modulation: Modulation::parse(&rec[2]).ok_or_else(|| bad(format!("modulation {:?}", &rec[2])))?,
                code_rate: num(3)?,
            };
            let bits = rec[4].parse::<u64>().map_err(|_| bad(format!("bad bit count {:?}", &rec[4])))?;
            let psnr = num(5)?;
            let pts = grouped.entry((rec[0].to_string(), key)).or_default();
            if pts.last().is_some_and(|&(b, p)| b >= bits || p > psnr) {
                return Err(bad("points out of order".into()));
            }
            pts.push((bits, psnr));
        }
        let mut kb = Self::new(channel_seed);
        for ((category, key), points) in grouped {
            kb.insert(RdCurve { category, key, points });
        }
        Ok(kb)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KbError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|source| KbError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| KbError::Io { path: path.display().to_string(), source })?;
        Self::from_csv(&text)
    }
}

/// Geometric grid from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
    if points <= 1 {
        return vec![lo];
    }
    let ratio = (hi as f64 / lo as f64).powf(1.0 / (points - 1) as f64);
    (0..points).map(|i| (lo as f64 * ratio.powi(i as i32)).round() as u64).collect()
}

pub fn default_grid() -> Vec<u64> {
    geometric_grid(2048, 262_144, 8)
}

/// PSNR of one crop after encoding at `bits` and crossing the channel.
fn trial(crop: &RasterImage, bits: u64, code: &LdpcCode, link: &LinkConfig, seed: u64) -> Result<f64, CodecError> {
    let stream = encode_region(crop, bits)?;
    let rx = send_bytes(code, link, &stream.bytes, seed, 0);
    let bbox = BBox::full(crop.width() as u32, crop.height() as u32);
    let decoded = if rx.ok { decode_region(&rx.bytes, &bbox).map(|d| d.image).ok() } else { None };
    let decoded = decoded.unwrap_or_else(|| RasterImage::filled(crop.width(), crop.height(), MID_GRAY));
    Ok(psnr(crop, &decoded, None).expect("same dimensions"))
}

/// Builds one curve per category plus the fallback curve under `channel`.
pub fn calibrate(
    crops: &BTreeMap<String, Vec<RasterImage>>,
    channel: &ChannelState,
    bit_grid: &[u64],
    code: &LdpcCode,
    max_iter: u32,
    channel_seed: u64,
) -> Result<KnowledgeBase, KbError> {
    if bit_grid.is_empty() || bit_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(KbError::BadGrid);
    }
    if let Some((cat, _)) = crops.iter().find(|(_, v)| v.is_empty()) {
        return Err(KbError::EmptyCrops(cat.clone()));
    }
    let key = ChannelKey::of(channel);
    let link = LinkConfig { max_iter, ..LinkConfig::new(channel.snr_db) };
    let cells: Vec<(&String, u64)> = crops.keys().flat_map(|c| bit_grid.iter().map(move |&b| (c, b))).collect();
    let means: Vec<f64> = cells
        .par_iter()
        .map(|&(cat, bits)| {
            let cell_seed = rng::derive(rng::derive_str(channel_seed, cat), bits);
            let list = &crops[cat];
            let mut sum = 0.0;
            for (i, crop) in list.iter().enumerate() {
                sum += trial(crop, bits, code, &link, rng::derive(cell_seed, i as u64))
                    .map_err(|source| KbError::Codec { category: cat.clone(), bits, source })?;
            }
            Ok(sum / list.len() as f64)
        })
        .collect::<Result<_, KbError>>()?;

    let mut kb = KnowledgeBase::new(channel_seed);
    let mut fallback = vec![0.0; bit_grid.len()];
    for (ci, cat) in crops.keys().enumerate() {
        let raw = &means[ci * bit_grid.len()..(ci + 1) * bit_grid.len()];
        let fitted = isotonic(raw);
        for (f, v) in fallback.iter_mut().zip(&fitted) {
            *f += v / crops.len() as f64;
        }
        kb.insert(RdCurve { category: cat.clone(), key, points: bit_grid.iter().copied().zip(fitted).collect() });
    }
    if !crops.is_empty() {
        kb.insert(RdCurve { category: FALLBACK.into(), key, points: bit_grid.iter().copied().zip(isotonic(&fallback)).collect() });
    }
    Ok(kb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> ChannelKey {
        ChannelKey::of(&ChannelState::new(20.0, 10_000))
    }

    fn curve(points: &[(u64, f64)]) -> RdCurve {
        RdCurve { category: "dog".into(), key: key(), points: points.to_vec() }
    }

    #[test]
    fn interpolation_midpoint() {
        let c = curve(&[(1000, 30.0), (2000, 34.0)]);
        assert_eq!(c.bits_for(32.0), 1500);
        assert_eq!(c.bits_for(30.0), 1000);
        assert_eq!(c.bits_for(34.0), 2000);
        assert_eq!(c.bits_for(10.0), 1000);
        assert_eq!(c.bits_for(90.0), 2000);
        assert_eq!(c.bits_for(30.001), 1001);
    }

    #[test]
    fn trailing_plateau_returns_first_point() {
        let c = curve(&[(1000, 30.0), (2000, 34.0), (4000, 34.0)]);
        assert_eq!(c.bits_for(34.0), 2000);
        assert_eq!(c.bits_for(50.0), 2000);
    }

    #[test]
    fn single_point_curve() {
        let c = curve(&[(4096, 33.0)]);
        assert_eq!(c.bits_for(0.0), 4096);
        assert_eq!(c.bits_for(50.0), 4096);
    }

    #[test]
    fn query_is_monotone_and_bounded() {
        let c = curve(&[(2048, 21.0), (4096, 25.5), (8192, 25.5), (16384, 31.0), (32768, 40.0)]);
        let mut last = 0;
        for i in 0..=5000 {
            let b = c.bits_for(15.0 + i as f64 * 0.006);
            assert!(b >= last && (2048..=32768).contains(&b));
            last = b;
        }
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic(&[5.0, 4.0, 3.0]), vec![4.0, 4.0, 4.0]);
        assert_eq!(isotonic(&[1.0, 2.0]), vec![1.0, 2.0]);
        assert!(isotonic(&[]).is_empty());
    }

    #[test]
    fn unknown_category_uses_fallback() {
        let mut kb = KnowledgeBase::new(1);
        kb.insert(curve(&[(1000, 30.0), (2000, 34.0)]));
        kb.insert(RdCurve { category: FALLBACK.into(), key: key(), points: vec![(500, 20.0), (5000, 40.0)] });
        let ch = ChannelState::new(20.0, 10_000);
        assert_eq!(kb.query_bits("zebra", &ch, 30.0).unwrap(), kb.curve(FALLBACK, &key()).unwrap().bits_for(30.0));
        assert_eq!(kb.query_bits("dog", &ch, 32.0).unwrap(), 1500);
        assert!(matches!(kb.query_bits("dog", &ChannelState::new(5.0, 10_000), 32.0), Err(KbError::UnknownChannel(_))));
    }

    #[test]
    fn csv_round_trip() {
        let mut kb = KnowledgeBase::new(77);
        kb.insert(curve(&[(1000, 30.123456789), (2000, 34.0)]));
        kb.insert(RdCurve { category: FALLBACK.into(), key: key(), points: vec![(1000, 1.0 / 3.0)] });
        let back = KnowledgeBase::from_csv(&kb.to_csv()).unwrap();
        assert_eq!(back, kb);
    }

    #[test]
    fn empty_kb_is_header_only() {
        let kb = KnowledgeBase::new(5);
        let text = kb.to_csv();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(KnowledgeBase::from_csv(&text).unwrap(), kb);
    }

    #[test]
    fn corrupted_row_reports_line() {
        let mut kb = KnowledgeBase::new(5);
        kb.insert(curve(&[(1000, 30.0), (2000, 34.0)]));
        let text = kb.to_csv().replace("2000,34", "2000,abc");
        match KnowledgeBase::from_csv(&text) {
            Err(KbError::Malformed { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let text = KnowledgeBase::new(5).to_csv().replace("version=1", "version=9");
        assert!(matches!(KnowledgeBase::from_csv(&text), Err(KbError::VersionMismatch { .. })));
    }

    #[test]
    fn default_grid_shape() {
        assert_eq!(default_grid(), vec![2048, 4096, 8192, 16384, 32768, 65536, 131072, 262144]);
    }
}
