//! Image quality metrics and their intention-masked variants.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::RasterImage;
use crate::scene::{Intention, MatchLevel, SceneDescription};

pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const L: f64 = 255.0;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("images differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("mask is {0}x{1} but images are {2}x{3}")]
    MaskMismatch(usize, usize, usize, usize),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("no {SSIM_WINDOW}x{SSIM_WINDOW} window fits inside the region")]
    RegionTooSmall,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![true; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// White where set, black elsewhere.
    pub fn to_image(&self) -> RasterImage {
        let samples = self.bits.iter().flat_map(|&b| [if b { 255 } else { 0 }; 3]).collect();
        RasterImage::new(self.width, self.height, samples).expect("sized")
    }

    /// Any pixel with a non-zero sample counts as set.
    pub fn from_image(img: &RasterImage) -> Self {
        let bits = img.samples().chunks(3).map(|p| p.iter().any(|&s| s != 0)).collect();
        Self { width: img.width(), height: img.height(), bits }
    }
}

/// One mask per match level; every pixel belongs to at most one of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelMasks {
    pub masks: BTreeMap<MatchLevel, Mask>,
}

impl LevelMasks {
    pub fn get(&self, level: MatchLevel) -> &Mask {
        &self.masks[&level]
    }
}

/// Objects without a target entry count as level 1. Overlaps go to the higher level.
pub fn build_masks(intention: &Intention, scene: &SceneDescription) -> LevelMasks {
    let (w, h) = (scene.width as usize, scene.height as usize);
    let mut claim = vec![0u8; w * h];
    for obj in &scene.objects {
        let level = intention.level_of(&obj.category).unwrap_or(MatchLevel::Low) as u8;
        let (x0, y0, bw, bh) = obj.bbox.as_usize();
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                let c = &mut claim[y * w + x];
                *c = (*c).max(level);
            }
        }
    }
    let masks = MatchLevel::ALL
        .iter()
        .map(|&lvl| {
            let bits = claim.iter().map(|&c| c == lvl as u8).collect();
            (lvl, Mask { width: w, height: h, bits })
        })
        .collect();
    LevelMasks { masks }
}

fn check_dims(a: &RasterImage, b: &RasterImage, mask: Option<&Mask>) -> Result<(), EvalError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(EvalError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    if let Some(m) = mask {
        if (m.width, m.height) != (a.width(), a.height()) {
            return Err(EvalError::MaskMismatch(m.width, m.height, a.width(), a.height()));
        }
    }
    Ok(())
}

/// PSNR over the masked pixels, all three channels, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &RasterImage, b: &RasterImage, mask: Option<&Mask>) -> Result<f64, EvalError> {
    check_dims(a, b, mask)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (pa, pb)) in a.samples().chunks(3).zip(b.samples().chunks(3)).enumerate() {
        if mask.is_none_or(|m| m.bits[i]) {
            sum += pa.iter().zip(pb).map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2)).sum::<f64>();
            n += 3;
        }
    }
    if n == 0 {
        return Err(EvalError::EmptyMask);
    }
    if sum == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (L * L / (sum / n as f64)).log10()).min(PSNR_CAP_DB))
}

/// BT.601 luma.
pub fn luma(img: &RasterImage) -> Vec<f64> {
    img.samples()
        .chunks(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect()
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let raw: [f64; SSIM_WINDOW] = std::array::from_fn(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = raw.iter().sum();
    raw.map(|v| v / s)
}

/// Valid-mode separable filtering of a w×h plane.
fn filter(plane: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM on luma over windows lying fully inside the mask.
pub fn ssim(a: &RasterImage, b: &RasterImage, mask: Option<&Mask>) -> Result<f64, EvalError> {
    check_dims(a, b, mask)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(EvalError::RegionTooSmall);
    }
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let inside: Vec<bool> = match mask {
        None => vec![true; ow * oh],
        Some(m) => {
            // Summed-area table to test each window in O(1).
            let mut sat = vec![0u32; (w + 1) * (h + 1)];
            for y in 0..h {
                for x in 0..w {
                    sat[(y + 1) * (w + 1) + x + 1] = u32::from(m.get(x, y)) + sat[y * (w + 1) + x + 1]
                        + sat[(y + 1) * (w + 1) + x]
                        - sat[y * (w + 1) + x];
                }
            }
            let full = (SSIM_WINDOW * SSIM_WINDOW) as u32;
            (0..ow * oh)
                .map(|i| {
                    let (x, y) = (i % ow, i / ow);
                    let (x1, y1) = (x + SSIM_WINDOW, y + SSIM_WINDOW);
                    sat[y1 * (w + 1) + x1] + sat[y * (w + 1) + x] - sat[y * (w + 1) + x1] - sat[y1 * (w + 1) + x] == full
                })
                .collect()
        }
    };
    if !inside.iter().any(|&v| v) {
        return Err(EvalError::RegionTooSmall);
    }
    let (la, lb) = (luma(a), luma(b));
    let taps = gaussian_taps();
    let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter(&la, w, h, &taps);
    let mu_b = filter(&lb, w, h, &taps);
    let e_aa = filter(&sq(&la, &la), w, h, &taps);
    let e_bb = filter(&sq(&lb, &lb), w, h, &taps);
    let e_ab = filter(&sq(&la, &lb), w, h, &taps);
    let (c1, c2) = ((K1 * L).powi(2), (K2 * L).powi(2));
    let mut total = 0.0;
    let mut n = 0usize;
    for i in (0..ow * oh).filter(|&i| inside[i]) {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        n += 1;
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub psnr: f64,
    /// Absent when no SSIM window fits inside the region.
    pub ssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub global: Metrics,
    /// Keyed by match level; levels with an empty mask are absent.
    pub levels: BTreeMap<u8, Metrics>,
}

fn metrics(a: &RasterImage, b: &RasterImage, mask: Option<&Mask>) -> Result<Metrics, EvalError> {
    let psnr = psnr(a, b, mask)?;
    let ssim = match ssim(a, b, mask) {
        Ok(v) => Some(v),
        Err(EvalError::RegionTooSmall) => None,
        Err(e) => return Err(e),
    };
    Ok(Metrics { psnr, ssim })
}

pub fn evaluate(original: &RasterImage, received: &RasterImage, masks: &LevelMasks) -> Result<MetricReport, EvalError> {
    let global = metrics(original, received, None)?;
    let mut levels = BTreeMap::new();
    for (&lvl, mask) in &masks.masks {
        if !mask.is_empty() {
            levels.insert(lvl as u8, metrics(original, received, Some(mask))?);
        }
    }
    Ok(MetricReport { global, levels })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// Images contributing to the PSNR mean.
    pub images: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> (Option<f64>, usize) {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    ((n > 0).then(|| sum / n as f64), n)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub global: MeanMetrics,
    pub levels: BTreeMap<u8, MeanMetrics>,
}

/// Arithmetic means over the images where each region is present.
pub fn summarize<'a>(reports: impl IntoIterator<Item = &'a MetricReport> + Clone) -> CorpusSummary {
    let agg = |pick: &dyn Fn(&MetricReport) -> Option<Metrics>| {
        let (psnr, images) = mean(reports.clone().into_iter().filter_map(pick).map(|m| m.psnr));
        let (ssim, _) = mean(reports.clone().into_iter().filter_map(pick).filter_map(|m| m.ssim));
        MeanMetrics { psnr, ssim, images }
    };
    let global = agg(&|r| Some(r.global));
    let levels = MatchLevel::ALL
        .iter()
        .map(|&l| (l as u8, agg(&|r| r.levels.get(&(l as u8)).copied())))
        .filter(|(_, m)| m.images > 0)
        .collect();
    CorpusSummary { global, levels }
}
