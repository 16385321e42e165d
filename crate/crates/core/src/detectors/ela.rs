//! ELA: residual between an image and its own JPEG re-compression.

use crate::error::Result;
use crate::heatmap::{normalize_by, percentile, HeatMap};
use crate::jpeg::jpeg_roundtrip;
use crate::raster::Raster;

pub const DEFAULT_ELA_QUALITY: u8 = 90;

/// Per-pixel maximum over channels of `|img − roundtrip(img)|`.
pub fn ela_residual(img: &Raster, quality: u8) -> Result<Vec<f64>> {
    let src = img.quantize_u8();
    let back = jpeg_roundtrip(&src, quality)?;
    let c = src.channels();
    Ok(src
        .samples()
        .chunks_exact(c)
        .zip(back.samples().chunks_exact(c))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        .collect())
}

/// Residual scaled by its 95th percentile and clamped.
pub fn detect_ela(img: &Raster, quality: u8) -> Result<HeatMap> {
    let residual = ela_residual(img, quality)?;
    let scale = percentile(&residual, 95.0);
    let scale = if scale > 0.0 { scale } else { residual.iter().copied().fold(0.0, f64::max) };
    HeatMap::new(img.width(), img.height(), normalize_by(&residual, scale))
}
