//! Orthonormal 8×8 type-II DCT and its inverse.

use std::sync::OnceLock;

pub type Block = [f64; 64];

/// Row-major zigzag scan: `ZIGZAG[i]` is the raster index of the i-th scanned coefficient.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20,
    13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59,
    52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

fn basis() -> &'static [[f64; 8]; 8] {
    static C: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    C.get_or_init(|| {
        let mut c = [[0.0; 8]; 8];
        for (k, row) in c.iter_mut().enumerate() {
            let scale = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (n, v) in row.iter_mut().enumerate() {
                *v = scale * (((2 * n + 1) * k) as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        c
    })
}

pub fn forward(input: &Block) -> Block {
    let c = basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for k in 0..8 {
            tmp[y * 8 + k] = (0..8).map(|n| c[k][n] * input[y * 8 + n]).sum();
        }
    }
    let mut out = [0.0; 64];
    for x in 0..8 {
        for k in 0..8 {
            out[k * 8 + x] = (0..8).map(|n| c[k][n] * tmp[n * 8 + x]).sum();
        }
    }
    out
}

pub fn inverse(input: &Block) -> Block {
    let c = basis();
    let mut tmp = [0.0; 64];
    for x in 0..8 {
        for n in 0..8 {
            tmp[n * 8 + x] = (0..8).map(|k| c[k][n] * input[k * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for n in 0..8 {
            out[y * 8 + n] = (0..8).map(|k| c[k][n] * tmp[y * 8 + k]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let mut b = [0.0; 64];
        for (i, v) in b.iter_mut().enumerate() {
            *v = ((i * 37) % 255) as f64 - 128.0;
        }
        let back = inverse(&forward(&b));
        for (a, r) in b.iter().zip(back.iter()) {
            assert!((a - r).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_block_has_only_dc() {
        let out = forward(&[10.0; 64]);
        assert!((out[0] - 80.0).abs() < 1e-9);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn energy_is_preserved() {
        let b: Block = std::array::from_fn(|i| ((i * 13) % 17) as f64);
        let e_in: f64 = b.iter().map(|v| v * v).sum();
        let e_out: f64 = forward(&b).iter().map(|v| v * v).sum();
        assert!((e_in - e_out).abs() < 1e-6);
    }

    #[test]
    fn zigzag_is_a_permutation() {
        let mut seen = [false; 64];
        for &z in &ZIGZAG {
            assert!(!seen[z]);
            seen[z] = true;
        }
    }
}
