//! Blind estimation of the JPEG quantization table from decoded-pixel DCT coefficients.

use crate::dct::BlockDctGrid;
use crate::error::{Error, Result};

/// Estimated quantization steps, zig-zag order, with a per-band confidence in `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantTable {
    pub steps: [u16; 64],
    pub confidence: [f64; 64],
}

#[derive(Clone, Copy, Debug)]
pub struct QtableConfig {
    /// Largest mean residual a step may leave and still count as consistent.
    pub tau_abs: f64,
    pub max_step: u16,
    pub min_blocks: usize,
}

impl Default for QtableConfig {
    fn default() -> Self {
        Self { tau_abs: 0.45, max_step: 255, min_blocks: 64 }
    }
}

/// Mean distance of the values to the nearest multiple of `q`.
pub fn mean_residual(values: &[f64], q: f64) -> f64 {
    let s: f64 = values.iter().map(|&d| (d - q * (d / q).round()).abs()).sum();
    s / values.len() as f64
}

/// Step estimate for one band: `(step, confidence)`.
pub fn estimate_band(values: &[f64], cfg: &QtableConfig) -> (u16, f64) {
    let mass = values.iter().map(|d| d.abs()).sum::<f64>() / values.len() as f64;
    // Every residual is bounded by |D|, so a band this quiet cannot discriminate steps.
    if mass <= cfg.tau_abs {
        return (1, 0.0);
    }
    let peak = values.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    // Above 2·peak every value rounds to zero and the residual equals the band mass.
    let upper = (2.0 * peak).ceil().min(f64::from(cfg.max_step)).max(1.0) as u16;
    let residuals: Vec<f64> = (1..=upper).map(|q| mean_residual(values, f64::from(q))).collect();
    let largest = (1..=upper).rev().find(|&q| residuals[q as usize - 1] <= cfg.tau_abs).unwrap_or(1);
    // Sparse bands let slightly-too-large steps pass the bound; take the best fit among the
    // steps above largest/2, a range that holds no proper divisor of the true step.
    let mut best = largest;
    for q in (largest / 2 + 1..=largest).rev() {
        if residuals[q as usize - 1] < residuals[best as usize - 1] {
            best = q;
        }
    }
    if best == 1 {
        return (1, 0.0);
    }
    let uniform = f64::from(best) / 4.0;
    let conf = (1.0 - residuals[best as usize - 1] / uniform).clamp(0.0, 1.0);
    (best, conf)
}

pub fn estimate_qtable(grid: &BlockDctGrid) -> Result<QuantTable> {
    estimate_qtable_with(grid, &QtableConfig::default())
}

pub fn estimate_qtable_with(grid: &BlockDctGrid, cfg: &QtableConfig) -> Result<QuantTable> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if grid.len() < cfg.min_blocks {
        return Err(Error::InvalidArgument(format!(
            "quantization estimation needs {} blocks, got {}",
            cfg.min_blocks,
            grid.len()
        )));
    }
    let mut steps = [1u16; 64];
    let mut confidence = [0.0; 64];
    let mut band = Vec::with_capacity(grid.len());
    for j in 0..64 {
        band.clear();
        band.extend(grid.band(j));
        let (s, c) = estimate_band(&band, cfg);
        steps[j] = s;
        confidence[j] = c;
    }
    Ok(QuantTable { steps, confidence })
}
