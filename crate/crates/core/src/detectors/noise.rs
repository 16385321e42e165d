//! NOI1, NOI2 and NOI4: local noise level inconsistencies.

use rayon::prelude::*;

use crate::dct::{dct8x8, to_zigzag};
use crate::error::{Error, Result};
use crate::filter::{gaussian_blur, median_filter};
use crate::heatmap::{median, normalize_by, percentile, upsample_cells, HeatMap};
use crate::raster::Luma;
use crate::wavelet::haar_hh;

/// MAD consistency constant for Gaussian noise.
const MAD_SCALE: f64 = 0.6745;

pub const DEFAULT_NOI1_BLOCK: usize = 16;

/// Per-block MAD noise estimates on the diagonal Haar subband.
#[derive(Clone, Debug)]
pub struct Noi1Estimate {
    pub blocks_wide: usize,
    pub blocks_high: usize,
    pub block_size: usize,
    pub sigma: Vec<f64>,
}

pub fn noi1_sigma(img: &Luma, block_size: usize) -> Result<Noi1Estimate> {
    let min = 2 * 8 * block_size;
    if block_size == 0 || img.width() < min || img.height() < min {
        return Err(Error::TooSmall(format!(
            "NOI1 with block size {block_size} needs {min}x{min}, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let hh = haar_hh(img)?;
    let (bw, bh) = (hh.width() / block_size, hh.height() / block_size);
    let mut sigma = Vec::with_capacity(bw * bh);
    let mut buf = Vec::with_capacity(block_size * block_size);
    for by in 0..bh {
        for bx in 0..bw {
            buf.clear();
            for y in by * block_size..(by + 1) * block_size {
                for x in bx * block_size..(bx + 1) * block_size {
                    buf.push(hh.get(x, y).abs());
                }
            }
            sigma.push(median(&buf) / MAD_SCALE);
        }
    }
    Ok(Noi1Estimate { blocks_wide: bw, blocks_high: bh, block_size, sigma })
}

/// Deviation of each block's noise level from the image-wide median level.
pub fn detect_noi1(img: &Luma, block_size: usize) -> Result<HeatMap> {
    let est = noi1_sigma(img, block_size)?;
    let mid = median(&est.sigma);
    let dev: Vec<f64> = est.sigma.iter().map(|s| (s - mid).abs()).collect();
    let cells = normalize_by(&dev, percentile(&dev, 99.0));
    let cell = 2 * block_size;
    let scores =
        upsample_cells(&cells, est.blocks_wide, est.blocks_high, cell, cell, (0, 0), img.width(), img.height());
    HeatMap::new(img.width(), img.height(), scores)
}

/// Moments of the 63 AC bands over one window. Index 0 (DC) is unused.
#[derive(Clone, Debug, PartialEq)]
pub struct BandStats {
    pub variance: [f64; 64],
    /// Non-excess kurtosis (Gaussian = 3); `None` where the band has no spread.
    pub kurtosis: [Option<f64>; 64],
    pub count: usize,
}

impl BandStats {
    /// Population moments of the given per-band samples (`samples[k]` is band k's series).
    pub fn from_samples(samples: &[Vec<f64>]) -> BandStats {
        let mut variance = [0.0; 64];
        let mut kurtosis = [None; 64];
        let count = samples.get(1).map_or(0, Vec::len);
        for (k, s) in samples.iter().enumerate().take(64).skip(1) {
            let (v, kt) = moments(s);
            variance[k] = v;
            kurtosis[k] = kt;
        }
        BandStats { variance, kurtosis, count }
    }
}

fn moments(s: &[f64]) -> (f64, Option<f64>) {
    if s.is_empty() {
        return (0.0, None);
    }
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in s {
        let d2 = (x - mean) * (x - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    let kurt = if s.len() >= 4 && m2 > 1e-12 { Some(m4 / (m2 * m2)) } else { None };
    (m2, kurt)
}

/// Sliding-window band statistics.
#[derive(Clone, Debug)]
pub struct BandStatsGrid {
    pub windows_wide: usize,
    pub windows_high: usize,
    /// Window side in pixels.
    pub window_px: usize,
    /// Pixel step between consecutive windows.
    pub window_step: usize,
    pub stats: Vec<BandStats>,
}

pub const DEFAULT_WINDOW_BLOCKS: usize = 8;
pub const DEFAULT_PATCH_STRIDE: usize = 4;

/// Level-shifted 8x8 DCT patches taken every `stride` pixels; each window spans
/// `window_blocks·8` pixels per side, slides by 8 pixels, and pools every patch lying
/// inside it.
pub fn band_stats(img: &Luma, window_blocks: usize, stride: usize) -> Result<BandStatsGrid> {
    if window_blocks == 0 || stride == 0 || stride > 8 {
        return Err(Error::InvalidArgument(format!(
            "window_blocks {window_blocks} must be positive and stride {stride} in 1..=8"
        )));
    }
    let (w, h) = img.dims();
    let window_px = window_blocks * 8;
    if w < window_px || h < window_px {
        return Err(Error::TooSmall(format!("band statistics need {window_px}x{window_px}, got {w}x{h}")));
    }
    let (pw, ph) = ((w - 8) / stride + 1, (h - 8) / stride + 1);
    let patches: Vec<[f64; 64]> = (0..pw * ph)
        .into_par_iter()
        .map(|i| {
            let (x0, y0) = ((i % pw) * stride, (i / pw) * stride);
            let mut block = [0.0; 64];
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = img.get(x0 + x, y0 + y) - 128.0;
                }
            }
            to_zigzag(&dct8x8(&block))
        })
        .collect();

    let step = 8;
    let (ww, wh) = ((w - window_px) / step + 1, (h - window_px) / step + 1);
    let per_side = (window_px - 8) / stride + 1;
    let stats = (0..ww * wh)
        .into_par_iter()
        .map(|i| {
            let (px0, py0) = ((i % ww) * step / stride, (i / ww) * step / stride);
            let mut samples: Vec<Vec<f64>> = (0..64).map(|_| Vec::with_capacity(per_side * per_side)).collect();
            for py in py0..py0 + per_side {
                for px in px0..px0 + per_side {
                    let c = &patches[py * pw + px];
                    for k in 1..64 {
                        samples[k].push(c[k]);
                    }
                }
            }
            BandStats::from_samples(&samples)
        })
        .collect();
    Ok(BandStatsGrid { windows_wide: ww, windows_high: wh, window_px, window_step: step, stats })
}

/// Least-squares fit of `sqrt(κ − 3) = a − b / σ²` over the usable bands of one window.
/// Returns `None` when fewer than 8 bands qualify.
pub fn fit_kurtosis_line(stats: &BandStats) -> Option<(f64, f64)> {
    if stats.count < 16 {
        return None;
    }
    let mut xs = Vec::with_capacity(63);
    let mut ys = Vec::with_capacity(63);
    for k in 1..64 {
        if let Some(kurt) = stats.kurtosis[k] {
            if stats.variance[k] > 1e-6 {
                xs.push(1.0 / stats.variance[k]);
                ys.push((kurt - 3.0).max(0.0).sqrt());
            }
        }
    }
    if xs.len() < 8 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx.is_nan() || sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    // y = a − b·x
    Some((my - slope * mx, -slope))
}

/// Noise variance implied by a fitted line.
pub fn noise_variance(a: f64, b: f64) -> f64 {
    (b / a.max(1e-6)).max(0.0)
}

/// Per-window noise variance estimates (unscored windows hold 0).
pub fn noi2_variance(img: &Luma) -> Result<(BandStatsGrid, Vec<f64>)> {
    let grid = band_stats(img, DEFAULT_WINDOW_BLOCKS, DEFAULT_PATCH_STRIDE)?;
    let var = grid.stats.iter().map(|s| fit_kurtosis_line(s).map_or(0.0, |(a, b)| noise_variance(a, b))).collect();
    Ok((grid, var))
}

/// Smallest variance that can map to a full score (σ = 2 gray levels): an image with no
/// measurable noise anywhere is not stretched up to 1.
pub const NOI2_MIN_SCALE: f64 = 4.0;

pub fn detect_noi2(img: &Luma) -> Result<HeatMap> {
    let (grid, var) = noi2_variance(img)?;
    let cells = normalize_by(&var, percentile(&var, 99.0).max(NOI2_MIN_SCALE));
    // Each window is represented by the step-sized cell at its centre.
    let c = (grid.window_px - grid.window_step) / 2;
    let scores = upsample_cells(
        &cells,
        grid.windows_wide,
        grid.windows_high,
        grid.window_step,
        grid.window_step,
        (c, c),
        img.width(),
        img.height(),
    );
    HeatMap::new(img.width(), img.height(), scores)
}

pub const NOI4_SIGMA: f64 = 4.0;

/// Smoothed median-filter residual energy.
pub fn noi4_energy(img: &Luma) -> Result<Luma> {
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::TooSmall(format!("NOI4 needs 3x3, got {}x{}", img.width(), img.height())));
    }
    let med = median_filter(img, 3)?;
    let mut r = img.clone();
    for (v, m) in r.samples_mut().iter_mut().zip(med.samples()) {
        *v = (*v - m).abs();
    }
    gaussian_blur(&r, NOI4_SIGMA)
}

pub fn detect_noi4(img: &Luma) -> Result<HeatMap> {
    let energy = noi4_energy(img)?;
    let mid = median(energy.samples());
    let dev: Vec<f64> = energy.samples().iter().map(|e| (e - mid).abs()).collect();
    let scale = percentile(&dev, 99.0);
    HeatMap::new(img.width(), img.height(), normalize_by(&dev, scale))
}
