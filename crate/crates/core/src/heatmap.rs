//! Per-pixel manipulation scores and the normalization helpers detectors share.

use std::path::Path;

use image::{DynamicImage, GrayImage};

use crate::error::{Error, Result};

/// Scores in `[0, 1]`; higher means more likely manipulated.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatMap {
    width: usize,
    height: usize,
    scores: Vec<f64>,
}

impl HeatMap {
    pub fn new(width: usize, height: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != width * height {
            return Err(Error::LengthMismatch(scores.len(), width * height));
        }
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidArgument("heatmap scores must lie in [0,1]".into()));
        }
        Ok(Self { width, height, scores })
    }

    pub fn uniform(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, scores: vec![value.clamp(0.0, 1.0); width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.scores[y * self.width + x]
    }

    /// 8-bit quantization, `round(score·255)`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.scores.iter().map(|s| (s * 255.0).round() as u8).collect()
    }

    pub fn from_u8(width: usize, height: usize, values: &[u8]) -> Result<Self> {
        Self::new(width, height, values.iter().map(|&v| f64::from(v) / 255.0).collect())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let img = GrayImage::from_raw(self.width as u32, self.height as u32, self.to_u8()).expect("sized buffer");
        let mut out = std::io::Cursor::new(Vec::new());
        DynamicImage::ImageLuma8(img).write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        Self::from_u8(w, h, img.as_raw())
    }

    pub fn mean_in(&self, select: impl Fn(usize, usize) -> bool) -> f64 {
        let mut s = 0.0;
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if select(x, y) {
                    s += self.get(x, y);
                    n += 1;
                }
            }
        }
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    }
}

/// Linear-interpolated percentile (`p` in 0..=100) of the finite values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

/// Divides by `scale` and clamps to `[0,1]`; a non-positive scale maps everything to 0.
pub fn normalize_by(values: &[f64], scale: f64) -> Vec<f64> {
    if scale.is_nan() || scale <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v / scale).clamp(0.0, 1.0)).collect()
}

/// Min-max normalization; a flat input maps to 0.
pub fn normalize_minmax(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

/// Nearest-neighbour expansion of a `blocks_wide`×`blocks_high` grid of cells of size
/// `cell_w`×`cell_h` (starting at `origin`) to a full `width`×`height` frame. Pixels outside
/// the grid take the nearest cell.
#[allow(clippy::too_many_arguments)]
pub fn upsample_cells(
    cells: &[f64],
    blocks_wide: usize,
    blocks_high: usize,
    cell_w: usize,
    cell_h: usize,
    origin: (usize, usize),
    width: usize,
    height: usize,
) -> Vec<f64> {
    debug_assert_eq!(cells.len(), blocks_wide * blocks_high);
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let by = (y.saturating_sub(origin.1) / cell_h).min(blocks_high - 1);
        for x in 0..width {
            let bx = (x.saturating_sub(origin.0) / cell_w).min(blocks_wide - 1);
            out.push(cells[by * blocks_wide + bx]);
        }
    }
    out
}
