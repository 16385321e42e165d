//! Orthonormal 8x8 DCT-II on block grids.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::raster::Luma;

/// Natural (row-major) index of the coefficient at each zig-zag position.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21,
    28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54,
    47, 55, 62, 63,
];

/// `BASIS[u][x]` is the orthonormal DCT-II basis function `u` sampled at `x`.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * (((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI) / 16.0).cos();
            }
        }
        b
    })
}

/// Forward transform of a row-major 8x8 block; output in natural order.
pub fn dct8x8(block: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    // rows
    for y in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                s += b[u][x] * block[y * 8 + x];
            }
            tmp[y * 8 + u] = s;
        }
    }
    let mut out = [0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                s += b[v][y] * tmp[y * 8 + u];
            }
            out[v * 8 + u] = s;
        }
    }
    out
}

/// Inverse of [`dct8x8`]; input and output in natural order.
pub fn idct8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for u in 0..8 {
                s += b[u][x] * coeffs[v * 8 + u];
            }
            tmp[v * 8 + x] = s;
        }
    }
    let mut out = [0.0; 64];
    for x in 0..8 {
        for y in 0..8 {
            let mut s = 0.0;
            for v in 0..8 {
                s += b[v][y] * tmp[v * 8 + x];
            }
            out[y * 8 + x] = s;
        }
    }
    out
}

pub fn to_zigzag(natural: &[f64; 64]) -> [f64; 64] {
    let mut out = [0.0; 64];
    for (z, &n) in ZIGZAG.iter().enumerate() {
        out[z] = natural[n];
    }
    out
}

pub fn from_zigzag(zz: &[f64; 64]) -> [f64; 64] {
    let mut out = [0.0; 64];
    for (z, &n) in ZIGZAG.iter().enumerate() {
        out[n] = zz[z];
    }
    out
}

/// Per-block DCT coefficients of an image, zig-zag ordered.
#[derive(Clone, Debug)]
pub struct BlockDctGrid {
    pub blocks_wide: usize,
    pub blocks_high: usize,
    /// Pixel offset of the first block's top-left corner.
    pub origin: (usize, usize),
    pub level_shift: bool,
    pub coeffs: Vec<[f64; 64]>,
}

impl BlockDctGrid {
    pub fn block(&self, bx: usize, by: usize) -> &[f64; 64] {
        &self.coeffs[by * self.blocks_wide + bx]
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// All coefficients of one zig-zag band, in block order.
    pub fn band(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.coeffs.iter().map(move |c| c[j])
    }

    /// Inverse transform back into `img`, overwriting the covered blocks.
    pub fn write_into(&self, img: &mut Luma) {
        let shift = if self.level_shift { 128.0 } else { 0.0 };
        let (ox, oy) = self.origin;
        for by in 0..self.blocks_high {
            for bx in 0..self.blocks_wide {
                let px = idct8x8(&from_zigzag(self.block(bx, by)));
                for y in 0..8 {
                    for x in 0..8 {
                        img.set(ox + bx * 8 + x, oy + by * 8 + y, px[y * 8 + x] + shift);
                    }
                }
            }
        }
    }
}

/// Orthonormal DCT of every complete 8x8 block whose grid starts at `(origin_x, origin_y)`.
///
/// With `level_shift`, 128 is subtracted from the samples first. Partial border blocks are
/// discarded.
pub fn block_dct8(img: &Luma, origin_x: usize, origin_y: usize, level_shift: bool) -> Result<BlockDctGrid> {
    if origin_x >= 8 || origin_y >= 8 {
        return Err(Error::InvalidArgument(format!("grid origin ({origin_x},{origin_y}) outside [0,8)")));
    }
    let bw = img.width().saturating_sub(origin_x) / 8;
    let bh = img.height().saturating_sub(origin_y) / 8;
    if bw == 0 || bh == 0 {
        return Err(Error::EmptyGrid);
    }
    let shift = if level_shift { 128.0 } else { 0.0 };
    let mut coeffs = Vec::with_capacity(bw * bh);
    let mut block = [0.0; 64];
    for by in 0..bh {
        for bx in 0..bw {
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = img.get(origin_x + bx * 8 + x, origin_y + by * 8 + y) - shift;
                }
            }
            coeffs.push(to_zigzag(&dct8x8(&block)));
        }
    }
    Ok(BlockDctGrid { blocks_wide: bw, blocks_high: bh, origin: (origin_x, origin_y), level_shift, coeffs })
}
