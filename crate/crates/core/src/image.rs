//! RGB raster images and binary PPM (P6) I/O.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::scene::BBox;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    Unsupported(String),
    #[error("truncated image file: {0}")]
    Truncated(String),
    #[error("sample buffer length {got} does not match {width}x{height}x3")]
    BadLength { width: usize, height: usize, got: usize },
}

/// Row-major interleaved RGB, 8 bits per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || samples.len() != width * height * 3 {
            return Err(ImageError::BadLength { width, height, got: samples.len() });
        }
        Ok(Self { width, height, samples })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let samples = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, samples }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.samples[i], self.samples[i + 1], self.samples[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.samples[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies out the pixels under `bbox`. The box must lie inside the image.
    pub fn crop(&self, bbox: &BBox) -> RasterImage {
        assert!(bbox.fits_in(self.width, self.height), "crop outside image");
        let (x0, y0, w, h) = bbox.as_usize();
        let mut samples = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            samples.extend_from_slice(&self.samples[start..start + w * 3]);
        }
        RasterImage { width: w, height: h, samples }
    }

    /// Writes `patch` with its top-left corner at (x, y).
    pub fn paste(&mut self, patch: &RasterImage, x: usize, y: usize) {
        assert!(x + patch.width <= self.width && y + patch.height <= self.height, "paste outside image");
        for row in 0..patch.height {
            let dst = ((y + row) * self.width + x) * 3;
            let src = row * patch.width * 3;
            self.samples[dst..dst + patch.width * 3]
                .copy_from_slice(&patch.samples[src..src + patch.width * 3]);
        }
    }

    pub fn fill_rect(&mut self, bbox: &BBox, rgb: [u8; 3]) {
        let (x0, y0, w, h) = bbox.as_usize();
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                self.set_pixel(x, y, rgb);
            }
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.samples);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self, ImageError> {
        if bytes.is_empty() {
            return Err(ImageError::Truncated("empty file".into()));
        }
        let mut pos = 0;
        let magic = next_token(bytes, &mut pos).ok_or_else(|| ImageError::Truncated("missing magic".into()))?;
        if magic != b"P6" {
            return Err(ImageError::Unsupported(format!(
                "expected binary PPM (P6), found {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let mut fields = [0usize; 3];
        for (slot, name) in fields.iter_mut().zip(["width", "height", "maxval"]) {
            let tok = next_token(bytes, &mut pos)
                .ok_or_else(|| ImageError::Truncated(format!("missing {name}")))?;
            *slot = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ImageError::Unsupported(format!("bad {name} field")))?;
        }
        let [width, height, maxval] = fields;
        if maxval != 255 {
            return Err(ImageError::Unsupported(format!("maxval {maxval}, only 255 is supported")));
        }
        if width == 0 || height == 0 {
            return Err(ImageError::Unsupported("zero image dimension".into()));
        }
        // Exactly one whitespace byte separates the header from the raster.
        if pos >= bytes.len() {
            return Err(ImageError::Truncated("no raster data".into()));
        }
        pos += 1;
        let need = width * height * 3;
        let raster = &bytes[pos..];
        if raster.len() < need {
            return Err(ImageError::Truncated(format!("raster has {} of {need} bytes", raster.len())));
        }
        Ok(RasterImage { width, height, samples: raster[..need].to_vec() })
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage, ImageError> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ppm") | Some("pnm") | None => {}
        Some(other) => return Err(ImageError::Unsupported(format!("extension .{other}"))),
    }
    let bytes = fs::read(path).map_err(|source| ImageError::Io { path: path.display().to_string(), source })?;
    RasterImage::from_ppm(&bytes)
}

pub fn save_image(image: &RasterImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    fs::write(path, image.to_ppm()).map_err(|source| ImageError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pixel_white_round_trip() {
        let img = RasterImage::filled(1, 1, [255, 255, 255]);
        assert_eq!(RasterImage::from_ppm(&img.to_ppm()).unwrap(), img);
    }

    #[test]
    fn gradient_round_trip_through_file() {
        let mut samples = Vec::with_capacity(256 * 256 * 3);
        for y in 0..256u32 {
            for x in 0..256u32 {
                samples.extend_from_slice(&[x as u8, y as u8, ((x + y) / 2) as u8]);
            }
        }
        let img = RasterImage::new(256, 256, samples).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.ppm");
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.samples(), img.samples());
    }

    #[test]
    fn zero_byte_file_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.ppm");
        std::fs::write(&path, b"").unwrap();
        assert!(matches!(load_image(&path), Err(ImageError::Truncated(_))));
    }

    #[test]
    fn short_raster_is_truncated_and_p3_unsupported() {
        assert!(matches!(RasterImage::from_ppm(b"P6\n2 2\n255\n\x00\x01"), Err(ImageError::Truncated(_))));
        assert!(matches!(RasterImage::from_ppm(b"P3\n1 1\n255\n0 0 0"), Err(ImageError::Unsupported(_))));
    }

    #[test]
    fn header_comments_are_skipped() {
        let img = RasterImage::from_ppm(b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03").unwrap();
        assert_eq!(img.pixel(0, 0), [1, 2, 3]);
    }
}
