//! DCT: per-block blocking artifact measure against an estimated quantization table.

use crate::dct::{block_dct8, BlockDctGrid};
use crate::error::Result;
use crate::heatmap::{normalize_by, percentile, upsample_cells, HeatMap};
use crate::raster::Luma;

use super::qtable::{estimate_qtable, QuantTable};

/// Zig-zag AC bands that enter the measure.
pub const BAM_BANDS: std::ops::RangeInclusive<usize> = 1..=16;

/// Per-block measure together with the grid and table it was computed from.
#[derive(Clone, Debug)]
pub struct BamMap {
    pub grid: BlockDctGrid,
    pub table: QuantTable,
    pub values: Vec<f64>,
}

impl BamMap {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn used_bands(&self) -> impl Iterator<Item = usize> + '_ {
        BAM_BANDS.filter(|&j| self.table.confidence[j] > 0.0)
    }

    /// Measure that unquantized content would produce on average: Σ Q(j)/4.
    pub fn uniform_level(&self) -> f64 {
        self.used_bands().map(|j| f64::from(self.table.steps[j]) / 4.0).sum()
    }
}

/// Requantization residual of one block under `table`.
pub fn block_bam(coeffs: &[f64; 64], table: &QuantTable) -> f64 {
    BAM_BANDS
        .filter(|&j| table.confidence[j] > 0.0)
        .map(|j| {
            let q = f64::from(table.steps[j]);
            (coeffs[j] - q * (coeffs[j] / q).round()).abs()
        })
        .sum()
}

pub fn bam_map(img: &Luma) -> Result<BamMap> {
    let grid = block_dct8(img, 0, 0, true)?;
    let table = estimate_qtable(&grid)?;
    let values = grid.coeffs.iter().map(|c| block_bam(c, &table)).collect();
    Ok(BamMap { grid, table, values })
}

/// Re-quantizes every complete block with `table` (float domain, no pixel rounding).
pub fn requantize(img: &Luma, table: &QuantTable) -> Result<Luma> {
    let mut grid = block_dct8(img, 0, 0, true)?;
    for c in grid.coeffs.iter_mut() {
        for (v, &s) in c.iter_mut().zip(&table.steps) {
            let q = f64::from(s);
            *v = q * (*v / q).round();
        }
    }
    let mut out = img.clone();
    grid.write_into(&mut out);
    Ok(out)
}

/// Heatmap of the blocking artifact measure, scaled by its 99th percentile.
///
/// The scale never drops below the level unquantized content would reach, so an image that
/// is consistently quantized everywhere maps to near zero rather than to amplified noise.
pub fn detect_dct(img: &Luma) -> Result<HeatMap> {
    let bam = bam_map(img)?;
    let scale = percentile(&bam.values, 99.0).max(bam.uniform_level());
    let cells = normalize_by(&bam.values, scale);
    let g = &bam.grid;
    let scores = upsample_cells(&cells, g.blocks_wide, g.blocks_high, 8, 8, (0, 0), img.width(), img.height());
    HeatMap::new(img.width(), img.height(), scores)
}
