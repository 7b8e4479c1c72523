//! Splitting an image into background and object patches, and putting it back together.

use crate::image::RasterImage;
use crate::phy::frame::RegionKind;
use crate::scene::BBox;

use super::CodecError;

pub const WHITE: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPatch {
    pub kind: RegionKind,
    /// The full canvas for the background.
    pub bbox: BBox,
    pub category_id: u16,
    pub pixels: RasterImage,
}

fn check(bbox: &BBox, image: &RasterImage) -> Result<(), CodecError> {
    if bbox.fits_in(image.width(), image.height()) {
        Ok(())
    } else {
        Err(CodecError::OutsideCanvas { bbox: *bbox, width: image.width(), height: image.height() })
    }
}

/// Object crops in the given order, plus the image with every object box painted white.
pub fn extract_regions(image: &RasterImage, objects: &[(BBox, u16)]) -> Result<(RegionPatch, Vec<RegionPatch>), CodecError> {
    let mut background = image.clone();
    let mut patches = Vec::with_capacity(objects.len());
    for &(bbox, category_id) in objects {
        check(&bbox, image)?;
        patches.push(RegionPatch { kind: RegionKind::Object, bbox, category_id, pixels: image.crop(&bbox) });
        background.fill_rect(&bbox, WHITE);
    }
    let full = BBox::full(image.width() as u32, image.height() as u32);
    Ok((RegionPatch { kind: RegionKind::Background, bbox: full, category_id: 0, pixels: background }, patches))
}

/// Pastes objects over the background in order; later patches win on overlap.
pub fn reassemble(background: &RasterImage, objects: &[(BBox, &RasterImage)]) -> Result<RasterImage, CodecError> {
    let mut out = background.clone();
    for (bbox, pixels) in objects {
        check(bbox, &out)?;
        if (pixels.width(), pixels.height()) != (bbox.w as usize, bbox.h as usize) {
            return Err(CodecError::DimensionMismatch {
                got_w: pixels.width(),
                got_h: pixels.height(),
                want_w: bbox.w as usize,
                want_h: bbox.h as usize,
            });
        }
        out.paste(pixels, bbox.x as usize, bbox.y as usize);
    }
    Ok(out)
}

/// Transmission order: raster order of box centers, ties by position in the input.
pub fn ordering(boxes: &[BBox]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..boxes.len()).collect();
    idx.sort_by_key(|&i| {
        let (cx, cy) = boxes[i].center2();
        (cy, cx, i)
    });
    idx
}
