//! Decoded images as float samples on the 0–255 scale.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};

/// Multi-channel image, row-major and channel-interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

/// Single-channel image.
#[derive(Clone, Debug, PartialEq)]
pub struct Luma {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("raster dimensions must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::UnsupportedFormat(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(Error::LengthMismatch(data.len(), width * height * channels));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("raster samples must be finite".into()));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Interleaves equally sized planes into one raster.
    pub fn from_planes(planes: &[Luma]) -> Result<Self> {
        let first = planes.first().ok_or_else(|| Error::InvalidArgument("no planes".into()))?;
        let (w, h) = first.dims();
        for p in planes {
            if p.dims() != (w, h) {
                return Err(Error::DimensionMismatch { expected: (w, h), got: p.dims() });
            }
        }
        let c = planes.len();
        let mut data = vec![0.0; w * h * c];
        for (ci, p) in planes.iter().enumerate() {
            for (i, v) in p.data.iter().enumerate() {
                data[i * c + ci] = *v;
            }
        }
        Self::new(w, h, c, data)
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

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn plane(&self, c: usize) -> Luma {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Luma { width: self.width, height: self.height, data }
    }

    pub fn planes(&self) -> Vec<Luma> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    /// Rounds every sample to the nearest integer in `0..=255`.
    pub fn quantize_u8(&self) -> Raster {
        let data = self.data.iter().map(|v| v.round().clamp(0.0, 255.0)).collect();
        Raster { data, ..*self }
    }

    pub fn to_bytes_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn from_dynamic(img: &DynamicImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let gray = !img.color().has_color();
        if gray {
            let g = img.to_luma8();
            Self::new(w, h, 1, g.into_raw().into_iter().map(f64::from).collect())
        } else {
            let rgb = img.to_rgb8();
            Self::new(w, h, 3, rgb.into_raw().into_iter().map(f64::from).collect())
        }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let bytes = self.to_bytes_u8();
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("sized buffer"))
        } else {
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("sized buffer"))
        }
    }

    /// Decodes PNG or baseline JPEG bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?;
        Self::from_dynamic(&img)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes)
    }

    /// Lossless 8-bit PNG encoding.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_dynamic().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }
}

impl Luma {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("plane dimensions must be positive".into()));
        }
        if data.len() != width * height {
            return Err(Error::LengthMismatch(data.len(), width * height));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("plane samples must be finite".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0);
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
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

    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with edge replication for out-of-frame coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Luma {
        Luma { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn to_raster(&self) -> Raster {
        Raster { width: self.width, height: self.height, channels: 1, data: self.data.clone() }
    }
}

impl From<Luma> for Raster {
    fn from(l: Luma) -> Self {
        Raster { width: l.width, height: l.height, channels: 1, data: l.data }
    }
}

/// BT.601 luminance; single-channel input passes through unchanged.
pub fn to_luma(img: &Raster) -> Result<Luma> {
    match img.channels {
        1 => Ok(Luma { width: img.width, height: img.height, data: img.data.clone() }),
        3 => {
            let data = img.data.chunks_exact(3).map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).collect();
            Ok(Luma { width: img.width, height: img.height, data })
        }
        c => Err(Error::UnsupportedFormat(format!("{c} channels"))),
    }
}
