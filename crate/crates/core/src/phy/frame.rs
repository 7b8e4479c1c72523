//! Bit-exact frame layout (big-endian).
//!
//! ```text
//! image header : "PACE" | version u8 | width u16 | height u16 | region_count u16
//! per region   : kind u8 | category_id u16 | x u16 | y u16 | w u16 | h u16 | payload_len u32 | payload
//! ```
//!
//! On the link the image header and all region headers travel together in
//! one header segment, and each payload is its own segment; [`Frame::header_segment`]
//! and [`Frame::from_segments`] convert between the two views.

use serde::{Deserialize, Serialize};

use crate::scene::BBox;

use super::PhyError;

pub const MAGIC: &[u8; 4] = b"PACE";
pub const VERSION: u8 = 1;
pub const IMAGE_HEADER_LEN: usize = 11;
pub const REGION_HEADER_LEN: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Background = 0,
    Object = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionHeader {
    pub kind: RegionKind,
    pub category_id: u16,
    pub bbox: BBox,
    pub payload_len: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRegion {
    pub kind: RegionKind,
    pub category_id: u16,
    pub bbox: BBox,
    pub payload: Vec<u8>,
}

impl FrameRegion {
    pub fn header(&self) -> RegionHeader {
        RegionHeader { kind: self.kind, category_id: self.category_id, bbox: self.bbox, payload_len: self.payload.len() as u32 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u16,
    pub height: u16,
    pub regions: Vec<FrameRegion>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PhyError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(PhyError::Truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, PhyError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, PhyError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, PhyError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn push_region_header(out: &mut Vec<u8>, h: &RegionHeader) -> Result<(), PhyError> {
    let field = |v: u32| u16::try_from(v).map_err(|_| PhyError::FieldRange(format!("bbox value {v} exceeds u16")));
    out.push(h.kind as u8);
    out.extend_from_slice(&h.category_id.to_be_bytes());
    for v in [h.bbox.x, h.bbox.y, h.bbox.w, h.bbox.h] {
        out.extend_from_slice(&field(v)?.to_be_bytes());
    }
    out.extend_from_slice(&h.payload_len.to_be_bytes());
    Ok(())
}

fn read_region_header(r: &mut Reader<'_>) -> Result<RegionHeader, PhyError> {
    let kind = match r.u8()? {
        0 => RegionKind::Background,
        1 => RegionKind::Object,
        other => return Err(PhyError::Malformed(format!("region kind {other}"))),
    };
    let category_id = r.u16()?;
    let (x, y, w, h) = (r.u16()?, r.u16()?, r.u16()?, r.u16()?);
    let payload_len = r.u32()?;
    Ok(RegionHeader {
        kind,
        category_id,
        bbox: BBox::new(x.into(), y.into(), w.into(), h.into()),
        payload_len,
    })
}

fn push_image_header(out: &mut Vec<u8>, width: u16, height: u16, count: usize) -> Result<(), PhyError> {
    let count = u16::try_from(count).map_err(|_| PhyError::FieldRange(format!("{count} regions")))?;
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&width.to_be_bytes());
    out.extend_from_slice(&height.to_be_bytes());
    out.extend_from_slice(&count.to_be_bytes());
    Ok(())
}

fn read_image_header(r: &mut Reader<'_>) -> Result<(u16, u16, usize), PhyError> {
    if r.take(4)? != MAGIC {
        return Err(PhyError::Malformed("bad frame magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(PhyError::Malformed(format!("frame version {version}")));
    }
    Ok((r.u16()?, r.u16()?, r.u16()? as usize))
}

impl Frame {
    pub fn to_bytes(&self) -> Result<Vec<u8>, PhyError> {
        let mut out = Vec::with_capacity(self.wire_len());
        push_image_header(&mut out, self.width, self.height, self.regions.len())?;
        for region in &self.regions {
            push_region_header(&mut out, &region.header())?;
            out.extend_from_slice(&region.payload);
        }
        Ok(out)
    }

    pub fn parse(bytes: &[u8]) -> Result<Frame, PhyError> {
        let mut r = Reader { bytes, pos: 0 };
        let (width, height, count) = read_image_header(&mut r)?;
        let mut regions = Vec::with_capacity(count);
        for _ in 0..count {
            let h = read_region_header(&mut r)?;
            let payload = r.take(h.payload_len as usize)?.to_vec();
            regions.push(FrameRegion { kind: h.kind, category_id: h.category_id, bbox: h.bbox, payload });
        }
        if r.pos != bytes.len() {
            return Err(PhyError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Frame { width, height, regions })
    }

    /// Serialized length in bytes (before channel coding).
    pub fn wire_len(&self) -> usize {
        IMAGE_HEADER_LEN + self.regions.iter().map(|r| REGION_HEADER_LEN + r.payload.len()).sum::<usize>()
    }

    pub fn header_segment(&self) -> Result<Vec<u8>, PhyError> {
        let mut out = Vec::with_capacity(IMAGE_HEADER_LEN + REGION_HEADER_LEN * self.regions.len());
        push_image_header(&mut out, self.width, self.height, self.regions.len())?;
        for region in &self.regions {
            push_region_header(&mut out, &region.header())?;
        }
        Ok(out)
    }

    pub fn parse_header_segment(bytes: &[u8]) -> Result<(u16, u16, Vec<RegionHeader>), PhyError> {
        let mut r = Reader { bytes, pos: 0 };
        let (width, height, count) = read_image_header(&mut r)?;
        let headers = (0..count).map(|_| read_region_header(&mut r)).collect::<Result<_, _>>()?;
        Ok((width, height, headers))
    }

    pub fn payload_lens(&self) -> Vec<usize> {
        self.regions.iter().map(|r| r.payload.len()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn region_strategy() -> impl Strategy<Value = FrameRegion> {
        (any::<bool>(), any::<u16>(), any::<[u16; 4]>(), proptest::collection::vec(any::<u8>(), 0..64)).prop_map(
            |(bg, cat, b, payload)| FrameRegion {
                kind: if bg { RegionKind::Background } else { RegionKind::Object },
                category_id: cat,
                bbox: BBox::new(b[0].into(), b[1].into(), b[2].into(), b[3].into()),
                payload,
            },
        )
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(w in any::<u16>(), h in any::<u16>(), regions in proptest::collection::vec(region_strategy(), 0..6)) {
            let f = Frame { width: w, height: h, regions };
            let bytes = f.to_bytes().unwrap();
            prop_assert_eq!(bytes.len(), f.wire_len());
            prop_assert_eq!(Frame::parse(&bytes).unwrap(), f);
        }
    }

    #[test]
    fn layout_is_big_endian() {
        let f = Frame {
            width: 0x0102,
            height: 0x0304,
            regions: vec![FrameRegion {
                kind: RegionKind::Object,
                category_id: 0x0506,
                bbox: BBox::new(1, 2, 3, 4),
                payload: vec![0xAA],
            }],
        };
        let b = f.to_bytes().unwrap();
        assert_eq!(&b[..11], b"PACE\x01\x01\x02\x03\x04\x00\x01");
        assert_eq!(&b[11..], b"\x01\x05\x06\x00\x01\x00\x02\x00\x03\x00\x04\x00\x00\x00\x01\xAA");
    }

    #[test]
    fn truncated_and_trailing_rejected() {
        let f = Frame { width: 4, height: 4, regions: vec![] };
        let mut b = f.to_bytes().unwrap();
        assert!(matches!(Frame::parse(&b[..5]), Err(PhyError::Truncated)));
        b.push(0);
        assert!(matches!(Frame::parse(&b), Err(PhyError::Malformed(_))));
    }
}
