//! Pixel-level scoring of heatmaps against ground-truth masks.
//!
//! A band around the mask boundary (dilation minus erosion) is excluded. Predictions are
//! quantized to 0..=255 before any metric is evaluated.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::HeatMap;
use crate::mask::{dilate, erode, GtMask};

pub const DEFAULT_KERNEL: usize = 15;

pub const PRISTINE_OFFSET: usize = 16;
pub const PRISTINE_SIDE: usize = 10;
pub const PRISTINE_MIN_SIDE: usize = 64;

/// Scored pixels and the two scored classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreWeights {
    /// `true` where the pixel is scored.
    pub weights: GtMask,
    /// Eroded mask: pixels scored as manipulated.
    pub mr: GtMask,
    /// Outside the dilated mask: pixels scored as pristine.
    pub not_mr: GtMask,
}

impl ScoreWeights {
    /// Number of scored pixels, `|MR| + |NotMR|`.
    pub fn er(&self) -> usize {
        self.weights.count()
    }
}

pub fn no_score_weights(m: &GtMask, se: usize) -> Result<ScoreWeights> {
    let dil = dilate(m, se)?;
    let mr = erode(m, se)?;
    let not_mr = GtMask::from_bools(m.width(), m.height(), dil.bits().iter().map(|&d| !d).collect())?;
    let weights = GtMask::from_bools(
        m.width(),
        m.height(),
        mr.bits().iter().zip(not_mr.bits()).map(|(&a, &b)| a || b).collect(),
    )?;
    Ok(ScoreWeights { weights, mr, not_mr })
}

fn check_dims(m: &GtMask, pred: &HeatMap, w: &ScoreWeights) -> Result<()> {
    if m.dims() != pred.dims() {
        return Err(Error::DimensionMismatch { expected: m.dims(), got: pred.dims() });
    }
    if m.dims() != w.weights.dims() {
        return Err(Error::DimensionMismatch { expected: m.dims(), got: w.weights.dims() });
    }
    Ok(())
}

/// Grayscale weighted L1: mean of `|m − m̂| / 255` over scored pixels.
pub fn gwl1(m: &GtMask, pred: &HeatMap, w: &ScoreWeights) -> Result<f64> {
    check_dims(m, pred, w)?;
    let er = w.er();
    if er == 0 {
        return Err(Error::UndefinedScore("no scored pixels".into()));
    }
    let q = pred.to_u8();
    let total: u64 = m
        .bits()
        .iter()
        .zip(&q)
        .zip(w.weights.bits())
        .filter(|(_, &scored)| scored)
        .map(|((&mi, &qi), _)| u64::from((if mi { 255u8 } else { 0 }).abs_diff(qi)))
        .sum();
    Ok(total as f64 / (255.0 * er as f64))
}

fn histograms(pred: &HeatMap, w: &ScoreWeights) -> ([u64; 256], [u64; 256]) {
    let mut pos = [0u64; 256];
    let mut neg = [0u64; 256];
    for ((q, &p), &n) in pred.to_u8().into_iter().zip(w.mr.bits()).zip(w.not_mr.bits()) {
        if p {
            pos[q as usize] += 1;
        } else if n {
            neg[q as usize] += 1;
        }
    }
    (pos, neg)
}

/// Trapezoidal ROC area. Thresholds run from a sentinel above 255 down through every
/// quantized level to 0, where everything is called positive. `tpr` maps
/// `(threshold, positives at or above it)` to a rate.
fn trapezoid(pos: &[u64; 256], neg: &[u64; 256], tpr: impl Fn(usize, u64) -> f64) -> f64 {
    let n_neg: u64 = neg.iter().sum();
    let (mut tp, mut fp) = (0u64, 0u64);
    let (mut prev_x, mut prev_y) = (0.0, tpr(256, 0));
    let mut area = 0.0;
    for v in (0..256).rev() {
        tp += pos[v];
        fp += neg[v];
        let x = fp as f64 / n_neg as f64;
        let y = tpr(v, tp);
        area += (x - prev_x) * (y + prev_y) / 2.0;
        prev_x = x;
        prev_y = y;
    }
    area
}

/// Pixel-level ROC AUC over the scored classes.
pub fn auc(m: &GtMask, pred: &HeatMap, w: &ScoreWeights) -> Result<f64> {
    check_dims(m, pred, w)?;
    let (pos, neg) = histograms(pred, w);
    let n_pos: u64 = pos.iter().sum();
    let n_neg: u64 = neg.iter().sum();
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedScore(format!(
            "AUC needs both classes scored (|MR| = {n_pos}, |NotMR| = {n_neg})"
        )));
    }
    Ok(trapezoid(&pos, &neg, |_, tp| tp as f64 / n_pos as f64))
}

/// AUC under the pristine protocol. The fictitious region may be smaller than the structuring
/// element, leaving no manipulated pixel to score; the true positive rate is then 0 at every
/// threshold above 0 and 1 at the all-positive threshold, so the curve can only close at the
/// end and the area is `(1 − FPR at the lowest positive threshold) / 2`.
pub fn auc_pristine(m: &GtMask, pred: &HeatMap, w: &ScoreWeights) -> Result<f64> {
    check_dims(m, pred, w)?;
    if w.mr.count() > 0 {
        return auc(m, pred, w);
    }
    let (pos, neg) = histograms(pred, w);
    if neg.iter().sum::<u64>() == 0 {
        return Err(Error::UndefinedScore("no pristine pixels scored".into()));
    }
    Ok(trapezoid(&pos, &neg, |v, _| if v == 0 { 1.0 } else { 0.0 }))
}

/// Fixed 10x10 fictitious manipulation used to score images with no real one.
pub fn pristine_mask(width: usize, height: usize) -> Result<GtMask> {
    if width < PRISTINE_MIN_SIDE || height < PRISTINE_MIN_SIDE {
        return Err(Error::TooSmall(format!(
            "pristine protocol needs {PRISTINE_MIN_SIDE}x{PRISTINE_MIN_SIDE}, got {width}x{height}"
        )));
    }
    GtMask::rect(width, height, PRISTINE_OFFSET, PRISTINE_OFFSET, PRISTINE_SIDE, PRISTINE_SIDE)
}

/// Both metrics for one heatmap, as fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub gwl1: f64,
    pub auc: f64,
}

/// Scores `pred` against `mask`, or against [`pristine_mask`] when `mask` is `None`.
pub fn score_image(mask: Option<&GtMask>, pred: &HeatMap, se: usize) -> Result<ImageScore> {
    match mask {
        Some(m) => {
            let w = no_score_weights(m, se)?;
            Ok(ImageScore { gwl1: gwl1(m, pred, &w)?, auc: auc(m, pred, &w)? })
        }
        None => {
            let m = pristine_mask(pred.width(), pred.height())?;
            let w = no_score_weights(&m, se)?;
            Ok(ImageScore { gwl1: gwl1(&m, pred, &w)?, auc: auc_pristine(&m, pred, &w)? })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub detector: String,
    pub gwl1: f64,
    pub auc: f64,
}

/// Mean and population standard deviation per detector, as fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub detector: String,
    pub gwl1_mean: f64,
    pub gwl1_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub count: usize,
}

fn mean_std(values: &mut [f64]) -> (f64, f64) {
    // Sorted summation makes the result independent of row order.
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    dev.sort_by(|a, b| a.total_cmp(b));
    (mean, (dev.iter().sum::<f64>() / n).sqrt())
}

/// Per-detector summary, ordered by detector name.
pub fn aggregate(rows: &[ScoreRow]) -> Result<Vec<AggregateRow>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    }
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let g = groups.entry(&r.detector).or_default();
        g.0.push(r.gwl1);
        g.1.push(r.auc);
    }
    Ok(groups
        .into_iter()
        .map(|(d, (mut g, mut a))| {
            let count = g.len();
            let (gwl1_mean, gwl1_std) = mean_std(&mut g);
            let (auc_mean, auc_std) = mean_std(&mut a);
            AggregateRow { detector: d.to_string(), gwl1_mean, gwl1_std, auc_mean, auc_std, count }
        })
        .collect())
}
