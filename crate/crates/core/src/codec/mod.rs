//! Rate-controlled 8×8 block-transform codec and region composition.
//!
//! Stream layout (big-endian): magic `0x50 0x43`, quality u8, scale u8,
//! width u16, height u16, then a u32 count of coded blocks followed by the
//! entropy-coded blocks in raster order. Blocks past the declared count decode
//! to mid-gray.
//!
//! `scale` is the log2 downsampling factor applied before the transform. Rate
//! control tries every scale and keeps the reconstruction closest to the
//! source, so a budget too small for full-resolution blocks yields a blurred
//! region instead of a truncated one.

mod dct;
mod entropy;
pub mod external;
pub mod region;

use rayon::prelude::*;
use thiserror::Error;

use crate::image::RasterImage;
use crate::scene::BBox;

use dct::{Block, ZIGZAG};
use entropy::{category, get_magnitude, put_magnitude, tables, BitReader, BitWriter, HuffTable};

pub use region::{extract_regions, ordering, reassemble, RegionPatch};

pub const STREAM_MAGIC: [u8; 2] = [0x50, 0x43];
pub const STREAM_HEADER_LEN: usize = 8;
pub const MAX_SCALE: u8 = 3;
/// Smallest accepted budget; below this no stream carries useful content.
pub const MIN_BUDGET_BITS: u64 = 256;
pub const MAX_QUALITY: u8 = 255;
/// Upper bound on full encodes spent searching for the quality.
pub const MAX_RATE_ITERATIONS: usize = 12;
pub const MID_GRAY: [u8; 3] = [128, 128, 128];

const COEFF_LIMIT: i32 = 1023;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("budget of {budget_bits} bits is below the codec minimum of {MIN_BUDGET_BITS}")]
    BudgetTooSmall { budget_bits: u64 },
    #[error("patch of {width}x{height} cannot be coded")]
    BadDimensions { width: usize, height: usize },
    #[error("stream does not start with the codec magic")]
    BadMagic,
    #[error("stream truncated: {0}")]
    Truncated(String),
    #[error("stream is {got_w}x{got_h} but the region is {want_w}x{want_h}")]
    DimensionMismatch { got_w: usize, got_h: usize, want_w: usize, want_h: usize },
    #[error("corrupt stream: {0}")]
    Corrupt(String),
    #[error("region {bbox} lies outside the {width}x{height} canvas")]
    OutsideCanvas { bbox: BBox, width: usize, height: usize },
    #[error("external codec: {0}")]
    External(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceBitstream {
    pub bytes: Vec<u8>,
    pub quality: u8,
    /// True when even the coarsest quality overflowed and trailing blocks were dropped.
    pub truncated: bool,
}

impl SourceBitstream {
    pub fn declared_len(&self) -> usize {
        self.bytes.len()
    }

    pub fn bits(&self) -> u64 {
        8 * self.bytes.len() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedRegion {
    pub image: RasterImage,
    pub quality: u8,
    pub truncated: bool,
}

/// Quantizer step for a quality: 1 at 255, 1024 at 0, geometric in between.
pub fn quant_step(quality: u8) -> f64 {
    2f64.powf(f64::from(255 - quality) / 25.5)
}

fn chroma_step(quality: u8) -> f64 {
    2.0 * quant_step(quality)
}

fn to_ycc([r, g, b]: [u8; 3]) -> [f64; 3] {
    let (r, g, b) = (f64::from(r), f64::from(g), f64::from(b));
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0,
        0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0,
    ]
}

fn to_rgb([y, cb, cr]: [f64; 3]) -> [u8; 3] {
    let (cb, cr) = (cb - 128.0, cr - 128.0);
    let clamp = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    [clamp(y + 1.402 * cr), clamp(y - 0.344_136 * cb - 0.714_136 * cr), clamp(y + 1.772 * cb)]
}

/// Transform coefficients of every 8×8 block, three channels each, in raster block order.
fn analyse(patch: &RasterImage) -> Vec<[Block; 3]> {
    let (w, h) = (patch.width(), patch.height());
    let (bw, bh) = (w.div_ceil(8), h.div_ceil(8));
    (0..bw * bh)
        .into_par_iter()
        .map(|i| {
            let (bx, by) = (i % bw, i / bw);
            let mut planes = [[0.0; 64]; 3];
            for y in 0..8 {
                for x in 0..8 {
                    let px = (bx * 8 + x).min(w - 1);
                    let py = (by * 8 + y).min(h - 1);
                    let ycc = to_ycc(patch.pixel(px, py));
                    for c in 0..3 {
                        planes[c][y * 8 + x] = ycc[c] - 128.0;
                    }
                }
            }
            planes.map(|p| dct::forward(&p))
        })
        .collect()
}

fn quantize(coeffs: &Block, step: f64) -> [i32; 64] {
    std::array::from_fn(|i| ((coeffs[i] / step).round() as i32).clamp(-COEFF_LIMIT, COEFF_LIMIT))
}

fn write_block(w: &mut BitWriter, q: &[i32; 64], diff: i32, dc: &HuffTable, ac: &HuffTable) {
    let size = category(diff);
    dc.write(w, size);
    put_magnitude(w, diff, size);
    let mut run = 0u8;
    for &z in &ZIGZAG[1..] {
        let v = q[z];
        if v == 0 {
            run += 1;
            continue;
        }
        while run >= 16 {
            ac.write(w, 0xF0);
            run -= 16;
        }
        let size = category(v);
        ac.write(w, (run << 4) | size);
        put_magnitude(w, v, size);
        run = 0;
    }
    if run > 0 {
        ac.write(w, 0x00);
    }
}

fn read_block(r: &mut BitReader<'_>, dc: &HuffTable, ac: &HuffTable) -> Result<(i32, [i32; 64]), CodecError> {
    let short = || CodecError::Truncated("block data ends early".into());
    let size = dc.read(r).ok_or_else(short)?;
    if size > 11 {
        return Err(CodecError::Corrupt(format!("DC category {size}")));
    }
    let diff = get_magnitude(r, size).ok_or_else(short)?;
    let mut q = [0i32; 64];
    let mut k = 1;
    while k < 64 {
        let sym = ac.read(r).ok_or_else(short)?;
        let (run, size) = (usize::from(sym >> 4), sym & 0x0F);
        if size == 0 {
            if run == 15 {
                k += 16;
                continue;
            }
            if run == 0 {
                break;
            }
            return Err(CodecError::Corrupt(format!("AC symbol {sym:#04x}")));
        }
        k += run;
        if k >= 64 {
            return Err(CodecError::Corrupt("AC run past block end".into()));
        }
        q[ZIGZAG[k]] = get_magnitude(r, size).ok_or_else(short)?;
        k += 1;
    }
    if k > 64 {
        return Err(CodecError::Corrupt("AC run past block end".into()));
    }
    Ok((diff, q))
}

/// Entropy-codes the blocks at one quality. Returns the payload and the bit offset after each block.
fn code_blocks(blocks: &[[Block; 3]], quality: u8) -> (Vec<u8>, Vec<usize>) {
    let t = tables();
    let steps = [quant_step(quality), chroma_step(quality), chroma_step(quality)];
    let mut w = BitWriter::new();
    let mut pred = [0i32; 3];
    let mut ends = Vec::with_capacity(blocks.len());
    for planes in blocks {
        let q: [[i32; 64]; 3] = std::array::from_fn(|c| quantize(&planes[c], steps[c]));
        let flat = (0..3).all(|c| q[c][0] == pred[c] && q[c][1..].iter().all(|&v| v == 0));
        if flat {
            w.put(0, 1);
        } else {
            w.put(1, 1);
            for c in 0..3 {
                let (dc, ac) = if c == 0 { (&t.dc_luma, &t.ac_luma) } else { (&t.dc_chroma, &t.ac_chroma) };
                write_block(&mut w, &q[c], q[c][0] - pred[c], dc, ac);
                pred[c] = q[c][0];
            }
        }
        ends.push(w.bit_len());
    }
    (w.finish(), ends)
}

fn assemble(patch: &RasterImage, quality: u8, scale: u8, coded: u32, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(STREAM_HEADER_LEN + 4 + payload.len());
    out.extend_from_slice(&STREAM_MAGIC);
    out.push(quality);
    out.push(scale);
    out.extend_from_slice(&(patch.width() as u16).to_be_bytes());
    out.extend_from_slice(&(patch.height() as u16).to_be_bytes());
    out.extend_from_slice(&coded.to_be_bytes());
    out.extend_from_slice(payload);
    out
}

fn stream_bits(payload_len: usize) -> u64 {
    8 * (STREAM_HEADER_LEN + 4 + payload_len) as u64
}

fn scaled_dims(w: usize, h: usize, scale: u8) -> (usize, usize) {
    (w.div_ceil(1 << scale), h.div_ceil(1 << scale))
}

/// Box-filter downsampling by `2^scale`; edge cells average what they cover.
fn downsample(patch: &RasterImage, scale: u8) -> RasterImage {
    if scale == 0 {
        return patch.clone();
    }
    let f = 1usize << scale;
    let (w, h) = (patch.width(), patch.height());
    let (sw, sh) = scaled_dims(w, h, scale);
    let mut out = RasterImage::filled(sw, sh, [0, 0, 0]);
    for sy in 0..sh {
        for sx in 0..sw {
            let mut acc = [0u32; 3];
            let mut n = 0;
            for y in sy * f..((sy + 1) * f).min(h) {
                for x in sx * f..((sx + 1) * f).min(w) {
                    let p = patch.pixel(x, y);
                    (0..3).for_each(|c| acc[c] += u32::from(p[c]));
                    n += 1;
                }
            }
            out.set_pixel(sx, sy, acc.map(|a| ((a + n / 2) / n) as u8));
        }
    }
    out
}

/// Bilinear upsampling by `2^scale` to exactly `w`×`h`, sampling at cell centers.
fn upsample(small: &RasterImage, scale: u8, w: usize, h: usize) -> RasterImage {
    if scale == 0 {
        return small.clone();
    }
    let f = f64::from(1u32 << scale);
    let (sw, sh) = (small.width(), small.height());
    let coord = |p: usize, n: usize| {
        let t = ((p as f64 + 0.5) / f - 0.5).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n.saturating_sub(2));
        (i, (i + 1).min(n - 1), t - i as f64)
    };
    let mut out = RasterImage::filled(w, h, [0, 0, 0]);
    for y in 0..h {
        let (y0, y1, fy) = coord(y, sh);
        for x in 0..w {
            let (x0, x1, fx) = coord(x, sw);
            let (a, b, c, d) = (small.pixel(x0, y0), small.pixel(x1, y0), small.pixel(x0, y1), small.pixel(x1, y1));
            let px = std::array::from_fn(|k| {
                let top = f64::from(a[k]) * (1.0 - fx) + f64::from(b[k]) * fx;
                let bot = f64::from(c[k]) * (1.0 - fx) + f64::from(d[k]) * fx;
                (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8
            });
            out.set_pixel(x, y, px);
        }
    }
    out
}

fn squared_error(a: &RasterImage, b: &RasterImage) -> u64 {
    a.samples().iter().zip(b.samples()).map(|(&x, &y)| (i64::from(x) - i64::from(y)).pow(2) as u64).sum()
}

/// Highest quality at which `blocks` fit, by bisection; `None` if even quality 0 overflows.
fn search_quality(blocks: &[[Block; 3]], budget_bits: u64) -> Option<(u8, Vec<u8>)> {
    let fits = |q: u8| {
        let (payload, _) = code_blocks(blocks, q);
        (stream_bits(payload.len()) <= budget_bits).then_some(payload)
    };
    if let Some(p) = fits(MAX_QUALITY) {
        return Some((MAX_QUALITY, p));
    }
    let mut best = fits(0)?;
    // Invariant: `lo` fits, `hi` does not.
    let (mut lo, mut hi) = (0u8, MAX_QUALITY);
    for _ in 2..MAX_RATE_ITERATIONS {
        if hi - lo <= 1 {
            break;
        }
        let mid = lo + (hi - lo) / 2;
        match fits(mid) {
            Some(p) => {
                lo = mid;
                best = p;
            }
            None => hi = mid,
        }
    }
    Some((lo, best))
}

/// Encodes at the scale and quality giving the smallest reconstruction error
/// among streams that fit in `budget_bits`.
pub fn encode_region(patch: &RasterImage, budget_bits: u64) -> Result<SourceBitstream, CodecError> {
    if budget_bits < MIN_BUDGET_BITS {
        return Err(CodecError::BudgetTooSmall { budget_bits });
    }
    let (w, h) = (patch.width(), patch.height());
    if w == 0 || h == 0 || w > usize::from(u16::MAX) || h > usize::from(u16::MAX) {
        return Err(CodecError::BadDimensions { width: w, height: h });
    }
    let mut best: Option<(u64, SourceBitstream)> = None;
    for scale in 0..=MAX_SCALE {
        let small = downsample(patch, scale);
        let blocks = analyse(&small);
        let Some((q, payload)) = search_quality(&blocks, budget_bits) else { continue };
        let stream = SourceBitstream { bytes: assemble(patch, q, scale, blocks.len() as u32, &payload), quality: q, truncated: false };
        let full = scale == 0 && q == MAX_QUALITY;
        let decoded = decode_region(&stream.bytes, &BBox::full(w as u32, h as u32))?;
        let err = squared_error(patch, &decoded.image);
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, stream));
        }
        if full {
            break;
        }
    }
    if let Some((_, stream)) = best {
        return Ok(stream);
    }
    // Even the coarsest scale overflows at quality 0: keep as many leading blocks as fit.
    let small = downsample(patch, MAX_SCALE);
    let blocks = analyse(&small);
    let (payload, ends) = code_blocks(&blocks, 0);
    let room = budget_bits - stream_bits(0);
    let coded = ends.iter().take_while(|&&e| (e.div_ceil(8) * 8) as u64 <= room).count();
    let mut kept = Vec::new();
    if coded > 0 {
        let end = ends[coded - 1];
        kept.extend_from_slice(&payload[..end.div_ceil(8)]);
        if end % 8 != 0 {
            *kept.last_mut().expect("non-empty") &= 0xFFu8 << (8 - end % 8);
        }
    }
    Ok(SourceBitstream { bytes: assemble(patch, 0, MAX_SCALE, coded as u32, &kept), quality: 0, truncated: true })
}

/// Decodes a stream whose dimensions must equal the region's.
pub fn decode_region(stream: &[u8], bbox: &BBox) -> Result<DecodedRegion, CodecError> {
    if stream.len() < STREAM_HEADER_LEN + 4 {
        return Err(CodecError::Truncated(format!("{} header bytes", stream.len())));
    }
    if stream[..2] != STREAM_MAGIC {
        return Err(CodecError::BadMagic);
    }
    let quality = stream[2];
    let scale = stream[3];
    if scale > MAX_SCALE {
        return Err(CodecError::Corrupt(format!("scale {scale}")));
    }
    let w = usize::from(u16::from_be_bytes([stream[4], stream[5]]));
    let h = usize::from(u16::from_be_bytes([stream[6], stream[7]]));
    let (_, _, want_w, want_h) = bbox.as_usize();
    if (w, h) != (want_w, want_h) {
        return Err(CodecError::DimensionMismatch { got_w: w, got_h: h, want_w, want_h });
    }
    let coded = u32::from_be_bytes([stream[8], stream[9], stream[10], stream[11]]) as usize;
    let (full_w, full_h) = (w, h);
    let (w, h) = scaled_dims(w, h, scale);
    let (bw, bh) = (w.div_ceil(8), h.div_ceil(8));
    if coded > bw * bh {
        return Err(CodecError::Corrupt(format!("{coded} blocks declared, image has {}", bw * bh)));
    }

    let t = tables();
    let steps = [quant_step(quality), chroma_step(quality), chroma_step(quality)];
    let mut r = BitReader::new(&stream[STREAM_HEADER_LEN + 4..]);
    let mut pred = [0i32; 3];
    let mut image = RasterImage::filled(w, h, MID_GRAY);
    for i in 0..coded {
        let flag = r.bit().ok_or_else(|| CodecError::Truncated(format!("block {i} of {coded}")))?;
        let mut q = [[0i32; 64]; 3];
        for c in 0..3 {
            q[c][0] = pred[c];
        }
        if flag == 1 {
            for c in 0..3 {
                let (dc, ac) = if c == 0 { (&t.dc_luma, &t.ac_luma) } else { (&t.dc_chroma, &t.ac_chroma) };
                let (diff, block) = read_block(&mut r, dc, ac)?;
                q[c] = block;
                q[c][0] = pred[c] + diff;
                pred[c] = q[c][0];
            }
        }
        let planes: [Block; 3] =
            std::array::from_fn(|c| dct::inverse(&std::array::from_fn(|k| f64::from(q[c][k]) * steps[c])));
        let (bx, by) = (i % bw, i / bw);
        for y in 0..8 {
            for x in 0..8 {
                let (px, py) = (bx * 8 + x, by * 8 + y);
                if px < w && py < h {
                    let k = y * 8 + x;
                    image.set_pixel(px, py, to_rgb([planes[0][k] + 128.0, planes[1][k] + 128.0, planes[2][k] + 128.0]));
                }
            }
        }
    }
    let image = upsample(&image, scale, full_w, full_h);
    Ok(DecodedRegion { image, quality, truncated: coded < bw * bh })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn psnr(a: &RasterImage, b: &RasterImage) -> f64 {
        let mse = a.samples().iter().zip(b.samples()).map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2)).sum::<f64>()
            / a.samples().len() as f64;
        if mse == 0.0 {
            100.0
        } else {
            10.0 * (255.0f64 * 255.0 / mse).log10()
        }
    }

    fn noise(w: usize, h: usize, seed: u64) -> RasterImage {
        let mut r = crate::rng::seeded(seed);
        RasterImage::new(w, h, (0..w * h * 3).map(|_| r.gen()).collect()).unwrap()
    }

    fn textured(w: usize, h: usize) -> RasterImage {
        let mut img = RasterImage::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                let v = ((x * 3 + y * 5) % 64) as u8 * 3 + if (x / 8 + y / 8) % 2 == 0 { 40 } else { 0 };
                img.set_pixel(x, y, [v, 255 - v, (x * 255 / w) as u8]);
            }
        }
        img
    }

    fn full(img: &RasterImage) -> BBox {
        BBox::full(img.width() as u32, img.height() as u32)
    }

    #[test]
    fn flat_patch_fits_minimum_budget() {
        let img = RasterImage::filled(64, 64, [90, 140, 200]);
        let s = encode_region(&img, MIN_BUDGET_BITS).unwrap();
        assert!(s.bits() <= MIN_BUDGET_BITS);
        assert!(!s.truncated);
        let d = decode_region(&s.bytes, &full(&img)).unwrap();
        assert!(psnr(&img, &d.image) > 40.0);
    }

    #[test]
    fn random_patch_near_lossless_at_large_budget() {
        for (w, h) in [(8, 8), (13, 21), (40, 24)] {
            let img = noise(w, h, 5);
            let s = encode_region(&img, 1 << 24).unwrap();
            assert_eq!(s.quality, MAX_QUALITY);
            let d = decode_region(&s.bytes, &full(&img)).unwrap();
            assert!(psnr(&img, &d.image) >= 45.0, "{w}x{h}: {}", psnr(&img, &d.image));
        }
    }

    #[test]
    fn budgets_are_respected_and_quality_monotone() {
        let img = textured(96, 80);
        let mut last = 0.0;
        for budget in [256u64, 600, 1500, 4000, 10_000, 30_000, 100_000] {
            let s = encode_region(&img, budget).unwrap();
            assert!(s.bits() <= budget);
            let p = psnr(&img, &decode_region(&s.bytes, &full(&img)).unwrap().image);
            assert!(p >= last - 0.1, "budget {budget}: {p} < {last}");
            last = p;
        }
    }

    #[test]
    fn tiny_budget_truncates_and_pads_gray() {
        // One skip bit per block at the coarsest scale is already over budget.
        let img = RasterImage::filled(2048, 1024, [0, 0, 0]);
        let s = encode_region(&img, MIN_BUDGET_BITS).unwrap();
        assert!(s.truncated && s.bits() <= MIN_BUDGET_BITS);
        let d = decode_region(&s.bytes, &full(&img)).unwrap();
        assert!(d.truncated);
        assert_eq!(d.image.pixel(2047, 1023), MID_GRAY);
        assert_eq!(d.image.pixel(0, 0), [0, 0, 0]);
    }

    #[test]
    fn small_budget_falls_back_to_lower_resolution() {
        let img = textured(128, 128);
        let s = encode_region(&img, 1200).unwrap();
        assert!(!s.truncated);
        assert!(s.bytes[3] > 0, "scale {}", s.bytes[3]);
        let d = decode_region(&s.bytes, &full(&img)).unwrap();
        assert_eq!((d.image.width(), d.image.height()), (128, 128));
    }

    #[test]
    fn resampling_preserves_flat_images() {
        let img = RasterImage::filled(37, 19, [12, 200, 77]);
        for scale in 0..=MAX_SCALE {
            let small = downsample(&img, scale);
            assert_eq!((small.width(), small.height()), scaled_dims(37, 19, scale));
            assert_eq!(upsample(&small, scale, 37, 19), img);
        }
    }

    #[test]
    fn budget_below_minimum_rejected() {
        let img = RasterImage::filled(8, 8, [0, 0, 0]);
        assert!(matches!(encode_region(&img, 255), Err(CodecError::BudgetTooSmall { budget_bits: 255 })));
    }

    #[test]
    fn truncated_stream_errors() {
        let img = noise(32, 32, 1);
        let s = encode_region(&img, 1 << 20).unwrap();
        let cut = &s.bytes[..s.bytes.len() / 2];
        assert!(matches!(decode_region(cut, &full(&img)), Err(CodecError::Truncated(_))));
        assert!(matches!(decode_region(&s.bytes[..5], &full(&img)), Err(CodecError::Truncated(_))));
    }

    #[test]
    fn header_checks() {
        let img = noise(16, 8, 2);
        let s = encode_region(&img, 1 << 16).unwrap();
        assert!(matches!(decode_region(&s.bytes, &BBox::new(0, 0, 8, 16)), Err(CodecError::DimensionMismatch { .. })));
        let mut bad = s.bytes.clone();
        bad[0] = 0;
        assert!(matches!(decode_region(&bad, &full(&img)), Err(CodecError::BadMagic)));
        assert_eq!(&s.bytes[4..8], &[0, 16, 0, 8]);
    }

    #[test]
    fn decode_is_deterministic() {
        let img = textured(48, 48);
        let s = encode_region(&img, 5000).unwrap();
        let a = decode_region(&s.bytes, &full(&img)).unwrap();
        let b = decode_region(&s.bytes, &full(&img)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quant_step_endpoints() {
        assert_eq!(quant_step(255), 1.0);
        assert!((quant_step(0) - 1024.0).abs() < 1e-9);
    }

    #[test]
    fn color_conversion_round_trips() {
        let mut r = crate::rng::seeded(3);
        for _ in 0..1000 {
            let rgb: [u8; 3] = r.gen();
            assert_eq!(to_rgb(to_ycc(rgb)), rgb);
        }
    }
}
