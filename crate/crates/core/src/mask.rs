//! Binary ground-truth masks and square-element morphology.

use std::path::Path;

use image::{DynamicImage, GrayImage};

use crate::error::{Error, Result};

/// Binary mask; `true` marks a manipulated pixel (stored as 255 on disk).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GtMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MorphMode {
    Dilate,
    Erode,
}

impl GtMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![true; width * height] }
    }

    pub fn from_bools(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch(data.len(), width * height));
        }
        Ok(Self { width, height, data })
    }

    /// Values must be exactly 0 or 255.
    pub fn from_u8(width: usize, height: usize, values: &[u8]) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::LengthMismatch(values.len(), width * height));
        }
        let data = values
            .iter()
            .map(|&v| match v {
                0 => Ok(false),
                255 => Ok(true),
                other => Err(Error::InvalidArgument(format!("non-binary mask value {other}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { width, height, data })
    }

    /// Axis-aligned rectangle `[x, x+w) × [y, y+h)` marked as manipulated.
    pub fn rect(width: usize, height: usize, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if x + w > width || y + h > height {
            return Err(Error::InvalidArgument("rectangle outside frame".into()));
        }
        let mut m = Self::empty(width, height);
        for yy in y..y + h {
            for xx in x..x + w {
                m.set(xx, yy, true);
            }
        }
        Ok(m)
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

    pub fn bits(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }

    pub fn is_subset_of(&self, other: &GtMask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let img = GrayImage::from_raw(self.width as u32, self.height as u32, self.to_u8()).expect("sized buffer");
        let mut out = std::io::Cursor::new(Vec::new());
        DynamicImage::ImageLuma8(img).write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Loads an 8-bit mask; samples ≥ 128 count as manipulated.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.into_raw().into_iter().map(|v| v >= 128).collect();
        Ok(Self { width: w, height: h, data })
    }

    /// Nearest-neighbour resampling to a new size.
    pub fn resize_nearest(&self, width: usize, height: usize) -> GtMask {
        let mut out = GtMask::empty(width, height);
        for y in 0..height {
            let sy = (((y as f64 + 0.5) * self.height as f64 / height as f64) as usize).min(self.height - 1);
            for x in 0..width {
                let sx = (((x as f64 + 0.5) * self.width as f64 / width as f64) as usize).min(self.width - 1);
                out.set(x, y, self.get(sx, sy));
            }
        }
        out
    }
}

/// Sliding-window count of set entries along one line, window `[i-r, i+r]` clipped to the line.
fn window_counts(line: &[bool], r: usize) -> Vec<usize> {
    let n = line.len();
    let mut prefix = vec![0usize; n + 1];
    for (i, &b) in line.iter().enumerate() {
        prefix[i + 1] = prefix[i] + b as usize;
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(r);
            let hi = (i + r + 1).min(n);
            prefix[hi] - prefix[lo]
        })
        .collect()
}

/// Binary morphology with an `s`×`s` square. Erosion treats the outside of the frame as
/// unmanipulated; dilation ignores it.
pub fn morph(mask: &GtMask, mode: MorphMode, s: usize) -> Result<GtMask> {
    if s == 0 || s.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("structuring element {s} must be odd and >= 1")));
    }
    let r = s / 2;
    let (w, h) = mask.dims();
    let keep = |count: usize| match mode {
        MorphMode::Dilate => count > 0,
        MorphMode::Erode => count == s,
    };
    let mut rows = vec![false; w * h];
    for y in 0..h {
        let counts = window_counts(&mask.data[y * w..(y + 1) * w], r);
        for x in 0..w {
            rows[y * w + x] = keep(counts[x]);
        }
    }
    let mut out = vec![false; w * h];
    let mut col = vec![false; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = rows[y * w + x];
        }
        let counts = window_counts(&col, r);
        for y in 0..h {
            out[y * w + x] = keep(counts[y]);
        }
    }
    GtMask::from_bools(w, h, out)
}

pub fn dilate(mask: &GtMask, s: usize) -> Result<GtMask> {
    morph(mask, MorphMode::Dilate, s)
}

pub fn erode(mask: &GtMask, s: usize) -> Result<GtMask> {
    morph(mask, MorphMode::Erode, s)
}
