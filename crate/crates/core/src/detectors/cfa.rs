//! CFA1 and CFA2: traces of Bayer demosaicing.
//!
//! A bilinearly demosaiced image is exactly reproduced by re-sampling it on its own Bayer
//! pattern and demosaicing again, and its interpolated green samples are perfectly predicted
//! by their acquired neighbours. Content that never went through the mosaic breaks both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::gaussian_kernel;
use crate::heatmap::{upsample_cells, HeatMap};
use crate::raster::{Luma, Raster};

use super::gmm::{fit_gmm2, EmConfig, GmmFit, VARIANCE_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BayerPattern {
    Rggb,
    Grbg,
    Gbrg,
    Bggr,
}

impl BayerPattern {
    /// Tie-break priority order.
    pub const ALL: [BayerPattern; 4] = [Self::Rggb, Self::Grbg, Self::Gbrg, Self::Bggr];

    /// Channel (0 = R, 1 = G, 2 = B) sensed at `(x, y)`.
    #[inline]
    pub fn color_at(self, x: usize, y: usize) -> usize {
        let layout: [usize; 4] = match self {
            Self::Rggb => [0, 1, 1, 2],
            Self::Grbg => [1, 0, 2, 1],
            Self::Gbrg => [1, 2, 0, 1],
            Self::Bggr => [2, 1, 1, 0],
        };
        layout[(y % 2) * 2 + x % 2]
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

fn require_color(img: &Raster) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::UnsupportedFormat(format!("CFA analysis needs 3 channels, got {}", img.channels())));
    }
    Ok(())
}

/// Single-plane sensor image: at every pixel, the channel the pattern senses there.
pub fn mosaic(img: &Raster, pattern: BayerPattern) -> Result<Luma> {
    require_color(img)?;
    Ok(Luma::from_fn(img.width(), img.height(), |x, y| img.get(x, y, pattern.color_at(x, y))))
}

/// Bilinear demosaicing: each missing sample is the mean of the same-colour sensed samples in
/// its 3x3 neighbourhood. Borders are mirrored, which keeps the Bayer parity.
pub fn demosaic_bilinear(cfa: &Luma, pattern: BayerPattern) -> Result<Raster> {
    let (w, h) = cfa.dims();
    if w < 2 || h < 2 {
        return Err(Error::TooSmall("demosaicing needs at least 2x2".into()));
    }
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let own = pattern.color_at(x, y);
            let mut sums = [0.0; 3];
            let mut counts = [0usize; 3];
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let xx = reflect(x as isize + dx, w);
                    let yy = reflect(y as isize + dy, h);
                    let c = pattern.color_at(xx, yy);
                    sums[c] += cfa.get(xx, yy);
                    counts[c] += 1;
                }
            }
            for c in 0..3 {
                data.push(if c == own { cfa.get(x, y) } else { sums[c] / counts[c].max(1) as f64 });
            }
        }
    }
    Raster::new(w, h, 3, data)
}

/// Per-pixel squared error of re-demosaicing `img` on `pattern`.
fn redemosaic_error(img: &Raster, pattern: BayerPattern) -> Result<Vec<f64>> {
    let re = demosaic_bilinear(&mosaic(img, pattern)?, pattern)?;
    Ok(img
        .samples()
        .chunks_exact(3)
        .zip(re.samples().chunks_exact(3))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum())
        .collect())
}

/// Pattern with the least total re-demosaicing error (ties follow [`BayerPattern::ALL`]).
pub fn estimate_pattern(img: &Raster) -> Result<BayerPattern> {
    let mut best = BayerPattern::Rggb;
    let mut best_err = f64::INFINITY;
    for p in BayerPattern::ALL {
        let e: f64 = redemosaic_error(img, p)?.iter().sum();
        if e < best_err {
            best_err = e;
            best = p;
        }
    }
    Ok(best)
}

/// Green prediction residual `G − mean(4 orthogonal neighbours)` with mirrored borders.
fn green_residual(img: &Raster) -> Luma {
    let (w, h) = img.dims();
    Luma::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        let n = img.get(reflect(xi - 1, w), y, 1)
            + img.get(reflect(xi + 1, w), y, 1)
            + img.get(x, reflect(yi - 1, h), 1)
            + img.get(x, reflect(yi + 1, h), 1);
        img.get(x, y, 1) - n / 4.0
    })
}

/// Green positions have a fixed `(x + y)` parity for every Bayer layout.
fn green_parity(pattern: BayerPattern) -> usize {
    if pattern.color_at(0, 0) == 1 {
        0
    } else {
        1
    }
}

/// Rank of each value scaled to `[0,1]`, ties sharing their average rank.
fn normalized_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.5; n];
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for k in i..=j {
            ranks[idx[k]] = avg / (n - 1) as f64;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Clone, Copy, Debug)]
pub struct Cfa1Config {
    pub block_size: usize,
}

impl Default for Cfa1Config {
    fn default() -> Self {
        Self { block_size: 16 }
    }
}

/// Per-block features behind the CFA1 heatmap.
#[derive(Clone, Debug)]
pub struct Cfa1Features {
    pub pattern: BayerPattern,
    pub blocks_wide: usize,
    pub blocks_high: usize,
    /// Error under the global pattern over the mean error of all patterns.
    pub f1: Vec<f64>,
    /// Residual variance at interpolated over sensed green positions.
    pub f2: Vec<f64>,
}

pub fn cfa1_features(img: &Raster, cfg: &Cfa1Config) -> Result<Cfa1Features> {
    require_color(img)?;
    let bs = cfg.block_size;
    let (w, h) = img.dims();
    if bs < 2 || w < 4 * bs || h < 4 * bs {
        return Err(Error::TooSmall(format!("CFA1 needs {0}x{0} for block size {bs}", 4 * bs)));
    }
    let errors: Vec<Vec<f64>> = BayerPattern::ALL.iter().map(|&p| redemosaic_error(img, p)).collect::<Result<_>>()?;
    let totals: Vec<f64> = errors.iter().map(|e| e.iter().sum()).collect();
    let mut best = 0;
    for (i, &t) in totals.iter().enumerate() {
        if t < totals[best] {
            best = i;
        }
    }
    let pattern = BayerPattern::ALL[best];
    let residual = green_residual(img);
    let gpar = green_parity(pattern);

    let (bw, bh) = (w / bs, h / bs);
    let mut f1 = Vec::with_capacity(bw * bh);
    let mut f2 = Vec::with_capacity(bw * bh);
    for by in 0..bh {
        for bx in 0..bw {
            let mut per_pattern = [0.0; 4];
            let mut sensed = Vec::with_capacity(bs * bs / 2);
            let mut interp = Vec::with_capacity(bs * bs / 2);
            for y in by * bs..(by + 1) * bs {
                for x in bx * bs..(bx + 1) * bs {
                    for (k, e) in errors.iter().enumerate() {
                        per_pattern[k] += e[y * w + x];
                    }
                    let r = residual.get(x, y);
                    if (x + y) % 2 == gpar {
                        sensed.push(r)
                    } else {
                        interp.push(r)
                    }
                }
            }
            let mean_err = per_pattern.iter().sum::<f64>() / 4.0;
            f1.push(if mean_err > 1e-12 { per_pattern[best] / mean_err } else { 1.0 });
            let vs = variance(&sensed).max(VARIANCE_FLOOR);
            let vi = variance(&interp).max(VARIANCE_FLOOR);
            f2.push(vi / vs);
        }
    }
    Ok(Cfa1Features { pattern, blocks_wide: bw, blocks_high: bh, f1, f2 })
}

fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
}

pub fn detect_cfa1(img: &Raster) -> Result<HeatMap> {
    detect_cfa1_with(img, &Cfa1Config::default())
}

/// Block score `0.5·rank(F1) + 0.5·rank(1 − |F2 − 1|)`: a block where no pattern wins and
/// where residual noise is alike at sensed and interpolated positions has lost its CFA trace.
pub fn detect_cfa1_with(img: &Raster, cfg: &Cfa1Config) -> Result<HeatMap> {
    let feats = cfa1_features(img, cfg)?;
    let r1 = normalized_ranks(&feats.f1);
    let closeness: Vec<f64> = feats.f2.iter().map(|f| 1.0 - (f - 1.0).abs()).collect();
    let r2 = normalized_ranks(&closeness);
    let cells: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
    let scores = upsample_cells(
        &cells,
        feats.blocks_wide,
        feats.blocks_high,
        cfg.block_size,
        cfg.block_size,
        (0, 0),
        img.width(),
        img.height(),
    );
    HeatMap::new(img.width(), img.height(), scores)
}

/// Log-ratio feature per 2x2 block.
#[derive(Clone, Debug)]
pub struct Cfa2Feature {
    pub blocks_wide: usize,
    pub blocks_high: usize,
    pub values: Vec<f64>,
}

/// 2D convolution with zero padding (out-of-frame samples contribute nothing).
fn convolve_zero(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, t) in taps.iter().enumerate() {
                let xx = x as isize + i as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    s += t * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, t) in taps.iter().enumerate() {
                let yy = y as isize + i as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    s += t * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Gaussian-weighted local variance of the green prediction residual, computed over the
/// pixels sharing the centre's `(x + y)` parity (the sensed or the interpolated lattice).
fn local_variance(residual: &Luma) -> Vec<f64> {
    let (w, h) = residual.dims();
    // 7x7 window, sigma 1.5
    let full = gaussian_kernel(1.5);
    let c = full.len() / 2;
    let taps = &full[c - 3..=c + 3];
    let mut out = vec![0.0; w * h];
    for parity in 0..2 {
        let mask: Vec<f64> = (0..w * h).map(|i| ((i % w + i / w) % 2 == parity) as u8 as f64).collect();
        let e1: Vec<f64> = residual.samples().iter().zip(&mask).map(|(e, m)| e * m).collect();
        let e2: Vec<f64> = residual.samples().iter().zip(&mask).map(|(e, m)| e * e * m).collect();
        let s0 = convolve_zero(&mask, w, h, taps);
        let s1 = convolve_zero(&e1, w, h, taps);
        let s2 = convolve_zero(&e2, w, h, taps);
        for i in 0..w * h {
            if mask[i] > 0.0 {
                let mu = s1[i] / s0[i];
                out[i] = (s2[i] / s0[i] - mu * mu).max(VARIANCE_FLOOR);
            }
        }
    }
    out
}

/// Half-width, in 2x2 blocks, of the neighbourhood the geometric means run over (8x8 blocks).
const NEIGHBOURHOOD_LO: usize = 3;
const NEIGHBOURHOOD_HI: usize = 4;

/// `L = ln(GM_A / GM_I)` per 2x2 block, with geometric means of the local residual variance
/// at acquired (A) and interpolated (I) green positions over the surrounding 8x8 blocks.
pub fn cfa2_feature(img: &Raster, pattern: BayerPattern) -> Result<Cfa2Feature> {
    require_color(img)?;
    let (w, h) = img.dims();
    let (bw, bh) = (w / 2, h / 2);
    if bw == 0 || bh == 0 {
        return Err(Error::TooSmall("CFA2 needs at least 2x2".into()));
    }
    let lv = local_variance(&green_residual(img));
    let gpar = green_parity(pattern);
    let floor_ln = VARIANCE_FLOOR.ln();

    // Integral images over ln v and counts, split by lattice.
    let stride = w + 1;
    let mut sum_a = vec![0.0; stride * (h + 1)];
    let mut cnt_a = vec![0.0; stride * (h + 1)];
    let mut sum_i = vec![0.0; stride * (h + 1)];
    let mut cnt_i = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let (mut ra, mut ca, mut ri, mut ci) = (0.0, 0.0, 0.0, 0.0);
        for x in 0..w {
            let l = lv[y * w + x].ln();
            if (x + y) % 2 == gpar {
                ra += l;
                ca += 1.0;
            } else {
                ri += l;
                ci += 1.0;
            }
            let o = (y + 1) * stride + x + 1;
            let u = y * stride + x + 1;
            sum_a[o] = sum_a[u] + ra;
            cnt_a[o] = cnt_a[u] + ca;
            sum_i[o] = sum_i[u] + ri;
            cnt_i[o] = cnt_i[u] + ci;
        }
    }
    let rect = |t: &[f64], x0: usize, y0: usize, x1: usize, y1: usize| {
        t[y1 * stride + x1] - t[y0 * stride + x1] - t[y1 * stride + x0] + t[y0 * stride + x0]
    };

    let mut values = Vec::with_capacity(bw * bh);
    for by in 0..bh {
        let y0 = 2 * by.saturating_sub(NEIGHBOURHOOD_LO);
        let y1 = (2 * (by + NEIGHBOURHOOD_HI + 1)).min(2 * bh);
        for bx in 0..bw {
            let x0 = 2 * bx.saturating_sub(NEIGHBOURHOOD_LO);
            let x1 = (2 * (bx + NEIGHBOURHOOD_HI + 1)).min(2 * bw);
            let ga = rect(&sum_a, x0, y0, x1, y1) / rect(&cnt_a, x0, y0, x1, y1);
            let gi = rect(&sum_i, x0, y0, x1, y1) / rect(&cnt_i, x0, y0, x1, y1);
            let both_floor = (ga - floor_ln).abs() < 1e-9 && (gi - floor_ln).abs() < 1e-9;
            values.push(if both_floor { 0.0 } else { ga - gi });
        }
    }
    Ok(Cfa2Feature { blocks_wide: bw, blocks_high: bh, values })
}

/// CFA2 result: heatmap plus the mixture it was read from (absent when the map is uniform).
#[derive(Clone, Debug)]
pub struct Cfa2Output {
    pub heatmap: HeatMap,
    pub pattern: BayerPattern,
    pub fit: GmmFit,
    pub degenerate: bool,
}

pub fn detect_cfa2(img: &Raster) -> Result<HeatMap> {
    Ok(analyze_cfa2(img)?.heatmap)
}

/// Posterior of the low-mean ("CFA absent") mixture component per 2x2 block.
pub fn analyze_cfa2(img: &Raster) -> Result<Cfa2Output> {
    require_color(img)?;
    let (w, h) = img.dims();
    if (w / 2) * (h / 2) < 64 {
        return Err(Error::TooSmall(format!("CFA2 needs 64 2x2 blocks, got {}", (w / 2) * (h / 2))));
    }
    let pattern = estimate_pattern(img)?;
    let feat = cfa2_feature(img, pattern)?;
    let fit = fit_gmm2(&feat.values, &EmConfig::default());
    let degenerate = fit.is_degenerate();
    let heatmap = if degenerate {
        HeatMap::uniform(w, h, 0.5)
    } else {
        let cells: Vec<f64> = feat.values.iter().map(|&l| fit.posterior(l)[1]).collect();
        let scores = upsample_cells(&cells, feat.blocks_wide, feat.blocks_high, 2, 2, (0, 0), w, h);
        HeatMap::new(w, h, scores)?
    };
    Ok(Cfa2Output { heatmap, pattern, fit, degenerate })
}
