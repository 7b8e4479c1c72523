//! Bit I/O and canonical prefix coding with the standard JPEG (Annex K) tables.

use std::sync::OnceLock;

#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u8,
    used: u8,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, value: u32, len: u8) {
        for i in (0..len).rev() {
            self.acc = (self.acc << 1) | ((value >> i) & 1) as u8;
            self.used += 1;
            if self.used == 8 {
                self.bytes.push(self.acc);
                self.acc = 0;
                self.used = 0;
            }
        }
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8 + self.used as usize
    }

    /// Zero-pads the last byte.
    pub fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.bytes.push(self.acc << (8 - self.used));
        }
        self.bytes
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn bit(&mut self) -> Option<u32> {
        let byte = *self.bytes.get(self.pos / 8)?;
        let b = (byte >> (7 - self.pos % 8)) & 1;
        self.pos += 1;
        Some(u32::from(b))
    }

    pub fn bits(&mut self, len: u8) -> Option<u32> {
        let mut v = 0;
        for _ in 0..len {
            v = (v << 1) | self.bit()?;
        }
        Some(v)
    }
}

/// A canonical prefix code described by per-length counts and the symbols in code order.
pub struct HuffTable {
    /// (code, length) per symbol byte; length 0 marks an absent symbol.
    codes: [(u16, u8); 256],
    counts: [u8; 16],
    symbols: Vec<u8>,
}

impl HuffTable {
    fn new(counts: [u8; 16], symbols: &[u8]) -> Self {
        let mut codes = [(0u16, 0u8); 256];
        let mut code = 0u16;
        let mut k = 0;
        for (i, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                codes[symbols[k] as usize] = (code, i as u8 + 1);
                code += 1;
                k += 1;
            }
            code <<= 1;
        }
        Self { codes, counts, symbols: symbols.to_vec() }
    }

    pub fn write(&self, w: &mut BitWriter, symbol: u8) {
        let (code, len) = self.codes[symbol as usize];
        debug_assert!(len > 0, "symbol {symbol:#x} not in table");
        w.put(u32::from(code), len);
    }

    pub fn read(&self, r: &mut BitReader<'_>) -> Option<u8> {
        let mut code = 0u32;
        let mut first = 0u32;
        let mut index = 0usize;
        for &count in &self.counts {
            code |= r.bit()?;
            let count = u32::from(count);
            if code < first + count {
                return self.symbols.get(index + (code - first) as usize).copied();
            }
            index += count as usize;
            first = (first + count) << 1;
            code <<= 1;
        }
        None
    }
}

pub struct Tables {
    pub dc_luma: HuffTable,
    pub ac_luma: HuffTable,
    pub dc_chroma: HuffTable,
    pub ac_chroma: HuffTable,
}

const DC_LUMA_COUNTS: [u8; 16] = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
const DC_CHROMA_COUNTS: [u8; 16] = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
const DC_SYMBOLS: [u8; 12] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

const AC_LUMA_COUNTS: [u8; 16] = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 125];
const AC_LUMA_SYMBOLS: [u8; 162] = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7,
    0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5,
    0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2,
    0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
    0xf9, 0xfa,
];

const AC_CHROMA_COUNTS: [u8; 16] = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 119];
const AC_CHROMA_SYMBOLS: [u8; 162] = [
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0,
    0x15, 0x62, 0x72, 0xd1, 0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18, 0x19, 0x1a, 0x26,
    0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5,
    0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3,
    0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda,
    0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
    0xf9, 0xfa,
];

pub fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| Tables {
        dc_luma: HuffTable::new(DC_LUMA_COUNTS, &DC_SYMBOLS),
        ac_luma: HuffTable::new(AC_LUMA_COUNTS, &AC_LUMA_SYMBOLS),
        dc_chroma: HuffTable::new(DC_CHROMA_COUNTS, &DC_SYMBOLS),
        ac_chroma: HuffTable::new(AC_CHROMA_COUNTS, &AC_CHROMA_SYMBOLS),
    })
}

/// Magnitude category: number of bits needed for |v|.
pub fn category(v: i32) -> u8 {
    (32 - v.unsigned_abs().leading_zeros()) as u8
}

/// Writes the category-relative bits of `v` (one's-complement for negatives).
pub fn put_magnitude(w: &mut BitWriter, v: i32, size: u8) {
    if size > 0 {
        let bits = if v < 0 { v + (1 << size) - 1 } else { v };
        w.put(bits as u32, size);
    }
}

pub fn get_magnitude(r: &mut BitReader<'_>, size: u8) -> Option<i32> {
    if size == 0 {
        return Some(0);
    }
    let bits = r.bits(size)? as i32;
    Some(if bits < 1 << (size - 1) { bits - (1 << size) + 1 } else { bits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_table_symbol_round_trips() {
        let t = tables();
        for (table, syms) in [
            (&t.dc_luma, &DC_SYMBOLS[..]),
            (&t.dc_chroma, &DC_SYMBOLS[..]),
            (&t.ac_luma, &AC_LUMA_SYMBOLS[..]),
            (&t.ac_chroma, &AC_CHROMA_SYMBOLS[..]),
        ] {
            let mut w = BitWriter::new();
            for &s in syms {
                table.write(&mut w, s);
            }
            let bytes = w.finish();
            let mut r = BitReader::new(&bytes);
            for &s in syms {
                assert_eq!(table.read(&mut r), Some(s));
            }
        }
    }

    #[test]
    fn known_luma_codes() {
        let t = tables();
        // EOB is 1010, ZRL is 11111111001 in the standard luma AC table.
        assert_eq!(t.ac_luma.codes[0x00], (0b1010, 4));
        assert_eq!(t.ac_luma.codes[0xF0], (0b111_1111_1001, 11));
        assert_eq!(t.dc_luma.codes[0], (0b00, 2));
    }

    #[test]
    fn magnitudes_round_trip() {
        for v in -2047..=2047 {
            let size = category(v);
            let mut w = BitWriter::new();
            put_magnitude(&mut w, v, size);
            let bytes = w.finish();
            assert_eq!(get_magnitude(&mut BitReader::new(&bytes), size), Some(v));
        }
        assert_eq!(category(0), 0);
        assert_eq!(category(-1), 1);
        assert_eq!(category(1023), 10);
    }

    #[test]
    fn reader_reports_exhaustion() {
        let mut r = BitReader::new(&[0xFF]);
        assert_eq!(r.bits(8), Some(0xFF));
        assert_eq!(r.bit(), None);
    }
}
