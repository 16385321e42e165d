//! Anomaly-enhancement triplet loss: SMAPE distances on pixels and on patch embeddings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::GtMask;
use crate::raster::{Luma, Raster};
use crate::wavelet::haar2d;

pub const SMAPE_EPS: f64 = 1e-8;
pub const DEFAULT_PATCH_SIDE: usize = 64;

/// Symmetric mean absolute percentage error, bounded to `[0,1]`.
pub fn smape(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("SMAPE of empty vectors".into()));
    }
    let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs() / (a.abs() + b.abs() + SMAPE_EPS)).sum();
    Ok(s / x.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchClass {
    Manipulated,
    NonManipulated,
}

impl PatchClass {
    pub fn opposite(self) -> Self {
        match self {
            PatchClass::Manipulated => PatchClass::NonManipulated,
            PatchClass::NonManipulated => PatchClass::Manipulated,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Patch {
    pub x: usize,
    pub y: usize,
    pub class: PatchClass,
    pub pixels: Raster,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
}

impl LossWeights {
    pub fn new(w0: f64, w1: f64, w2: f64) -> Result<Self> {
        let w = LossWeights { w0, w1, w2 };
        if [w0, w1, w2].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("loss weights must be finite and >= 0, got {w:?}")));
        }
        if w0 == 0.0 && w1 == 0.0 && w2 == 0.0 {
            return Err(Error::InvalidArgument("loss weights are all zero".into()));
        }
        Ok(w)
    }
}

/// Patch embedding. Implementations must return a constant-length, finite vector.
pub trait FeatureExtractor {
    fn extract(&self, patch: &Raster) -> Vec<f64>;
}

/// Per channel: mean, variance, then the mean energy of the nine detail subbands and the
/// final approximation of a 3-level Haar decomposition of the mean-removed channel.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceFeatures;

pub const REFERENCE_LEVELS: usize = 3;
pub const REFERENCE_FEATURES_PER_CHANNEL: usize = 2 + 3 * REFERENCE_LEVELS + 1;

fn energy(l: &Luma) -> f64 {
    let s = l.samples();
    if s.is_empty() {
        0.0
    } else {
        s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64
    }
}

impl FeatureExtractor for ReferenceFeatures {
    fn extract(&self, patch: &Raster) -> Vec<f64> {
        let mut out = Vec::with_capacity(patch.channels() * REFERENCE_FEATURES_PER_CHANNEL);
        for plane in patch.planes() {
            let n = plane.samples().len() as f64;
            let mean = plane.samples().iter().sum::<f64>() / n;
            let centred = plane.map(|v| v - mean);
            out.push(mean);
            out.push(energy(&centred));
            let mut ll = centred;
            for _ in 0..REFERENCE_LEVELS {
                match haar2d(&ll) {
                    Ok(level) => {
                        out.extend([energy(&level.lh), energy(&level.hl), energy(&level.hh)]);
                        ll = level.ll;
                    }
                    Err(_) => out.extend([0.0; 3]),
                }
            }
            out.push(energy(&ll));
        }
        out
    }
}

/// `w0·D(a, â) + w1·D(f(â), f(p)) − w2·D(f(â), f(n))`.
pub fn loss(a: &Patch, a_hat: &Raster, p: &Patch, n: &Patch, w: &LossWeights, f: &dyn FeatureExtractor) -> Result<f64> {
    if p.class != a.class {
        return Err(Error::ClassMismatch(format!("positive is {:?}, anchor is {:?}", p.class, a.class)));
    }
    if n.class == a.class {
        return Err(Error::ClassMismatch(format!("negative shares the anchor class {:?}", a.class)));
    }
    for other in [a_hat, &p.pixels, &n.pixels] {
        if other.dims() != a.pixels.dims() || other.channels() != a.pixels.channels() {
            return Err(Error::DimensionMismatch { expected: a.pixels.dims(), got: other.dims() });
        }
    }
    let fa = f.extract(a_hat);
    let pixel = smape(a.pixels.samples(), a_hat.samples())?;
    let pos = smape(&fa, &f.extract(&p.pixels))?;
    let neg = smape(&fa, &f.extract(&n.pixels))?;
    Ok(w.w0 * pixel + w.w1 * pos - w.w2 * neg)
}

#[derive(Clone, Debug)]
pub struct Triplet {
    pub anchor: Patch,
    pub positive: Patch,
    pub negative: Patch,
}

fn crop(img: &Raster, x0: usize, y0: usize, side: usize) -> Raster {
    let c = img.channels();
    let mut data = Vec::with_capacity(side * side * c);
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            for ch in 0..c {
                data.push(img.get(x, y, ch));
            }
        }
    }
    Raster::new(side, side, c, data).expect("sized buffer")
}

/// Non-overlapping patches labelled by mask coverage: manipulated at ≥ 50%, non-manipulated
/// at 0%, mixed patches dropped.
pub fn label_patches(img: &Raster, m: &GtMask, side: usize) -> Result<Vec<Patch>> {
    if img.dims() != m.dims() {
        return Err(Error::DimensionMismatch { expected: img.dims(), got: m.dims() });
    }
    if side == 0 {
        return Err(Error::InvalidArgument("patch side must be positive".into()));
    }
    let mut out = Vec::new();
    for by in 0..img.height() / side {
        for bx in 0..img.width() / side {
            let (x0, y0) = (bx * side, by * side);
            let mut hit = 0;
            for y in y0..y0 + side {
                for x in x0..x0 + side {
                    hit += m.get(x, y) as usize;
                }
            }
            let class = if 2 * hit >= side * side {
                PatchClass::Manipulated
            } else if hit == 0 {
                PatchClass::NonManipulated
            } else {
                continue;
            };
            out.push(Patch { x: x0, y: y0, class, pixels: crop(img, x0, y0, side) });
        }
    }
    Ok(out)
}

/// `count` triplets with anchors alternating between classes (manipulated first).
pub fn mine_triplets(img: &Raster, m: &GtMask, side: usize, count: usize, seed: u64) -> Result<Vec<Triplet>> {
    let patches = label_patches(img, m, side)?;
    let (manip, clean): (Vec<&Patch>, Vec<&Patch>) = patches.iter().partition(|p| p.class == PatchClass::Manipulated);
    if manip.is_empty() || clean.is_empty() {
        return Err(Error::NoTriplets(format!(
            "{} manipulated and {} non-manipulated patches of side {side}",
            manip.len(),
            clean.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for t in 0..count {
        let (same, other) = if t % 2 == 0 { (&manip, &clean) } else { (&clean, &manip) };
        let ai = rng.random_range(0..same.len());
        let pi = if same.len() > 1 {
            // Uniform over the other members of the class.
            let j = rng.random_range(0..same.len() - 1);
            if j >= ai {
                j + 1
            } else {
                j
            }
        } else {
            ai
        };
        let ni = rng.random_range(0..other.len());
        out.push(Triplet { anchor: same[ai].clone(), positive: same[pi].clone(), negative: other[ni].clone() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn patch(class: PatchClass, w: usize, h: usize, data: Vec<f64>) -> Patch {
        Patch { x: 0, y: 0, class, pixels: Raster::new(w, h, 1, data).unwrap() }
    }

    /// Single-feature extractor: the patch mean.
    struct MeanOnly;

    impl FeatureExtractor for MeanOnly {
        fn extract(&self, patch: &Raster) -> Vec<f64> {
            vec![patch.samples().iter().sum::<f64>() / patch.samples().len() as f64]
        }
    }

    #[test]
    fn smape_examples() {
        assert_eq!(smape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((smape(&[1.0], &[0.0]).unwrap() - 1.0 / (1.0 + 1e-8)).abs() < 1e-15);
        assert!((smape(&[1.0, 3.0], &[3.0, 1.0]).unwrap() - 0.5).abs() < 1e-8);
        assert_eq!(smape(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!(matches!(smape(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn loss_identical_patches_is_zero() {
        let a = patch(PatchClass::Manipulated, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let p = a.clone();
        let n = Patch { class: PatchClass::NonManipulated, ..a.clone() };
        let w = LossWeights::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(loss(&a, &a.pixels, &p, &n, &w, &ReferenceFeatures).unwrap(), 0.0);
    }

    #[test]
    fn loss_toy_hand_value() {
        let a = patch(PatchClass::Manipulated, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let a_hat = Raster::new(2, 2, 1, vec![2.0, 2.0, 3.0, 5.0]).unwrap();
        let p = patch(PatchClass::Manipulated, 2, 2, vec![4.0, 4.0, 4.0, 4.0]);
        let n = patch(PatchClass::NonManipulated, 2, 2, vec![0.0, 0.0, 1.0, 1.0]);
        let w = LossWeights::new(0.5, 2.0, 3.0).unwrap();
        // D(a, â) = (1/3 + 0 + 0 + 1/9) / 4 ; f(â) = 3, f(p) = 4, f(n) = 0.5
        let d0 = (1.0 / (3.0 + 1e-8) + 1.0 / (9.0 + 1e-8)) / 4.0;
        let d1 = 1.0 / (7.0 + 1e-8);
        let d2 = 2.5 / (3.5 + 1e-8);
        let expected = 0.5 * d0 + 2.0 * d1 - 3.0 * d2;
        let got = loss(&a, &a_hat, &p, &n, &w, &MeanOnly).unwrap();
        assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn loss_attains_negative_third_term() {
        let a = patch(PatchClass::Manipulated, 2, 2, vec![5.0; 4]);
        let n = patch(PatchClass::NonManipulated, 2, 2, vec![0.0; 4]);
        let w = LossWeights::new(1.0, 1.0, 2.0).unwrap();
        let l = loss(&a, &a.pixels, &a, &n, &w, &MeanOnly).unwrap();
        assert!((l + 2.0 * (5.0 / (5.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn loss_rejects_class_violations() {
        let a = patch(PatchClass::Manipulated, 2, 2, vec![1.0; 4]);
        let other = patch(PatchClass::NonManipulated, 2, 2, vec![1.0; 4]);
        let w = LossWeights::new(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(loss(&a, &a.pixels, &other, &other, &w, &MeanOnly), Err(Error::ClassMismatch(_))));
        assert!(matches!(loss(&a, &a.pixels, &a, &a, &w, &MeanOnly), Err(Error::ClassMismatch(_))));
        assert!(LossWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn reference_features_constant_and_rotation() {
        let c = Raster::filled(16, 16, 3, 42.0).unwrap();
        let f = ReferenceFeatures.extract(&c);
        assert_eq!(f.len(), 3 * REFERENCE_FEATURES_PER_CHANNEL);
        for ch in 0..3 {
            let v = &f[ch * REFERENCE_FEATURES_PER_CHANNEL..(ch + 1) * REFERENCE_FEATURES_PER_CHANNEL];
            assert_eq!(v[0], 42.0);
            assert!(v[1..].iter().all(|&e| e.abs() < 1e-20));
        }

        let data: Vec<f64> = (0..64 * 64 * 3).map(|i| ((i * 7919) % 251) as f64).collect();
        let img = Raster::new(64, 64, 3, data).unwrap();
        let mut rot = img.clone();
        for y in 0..64 {
            for x in 0..64 {
                for ch in 0..3 {
                    rot.set(63 - x, 63 - y, ch, img.get(x, y, ch));
                }
            }
        }
        let (a, b) = (ReferenceFeatures.extract(&img), ReferenceFeatures.extract(&rot));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
        }
    }

    #[test]
    fn reference_features_match_direct_statistics() {
        let data: Vec<f64> = (0..8 * 8).map(|i| ((i * i * 13 + 5) % 31) as f64).collect();
        let img = Raster::new(8, 8, 1, data.clone()).unwrap();
        let f = ReferenceFeatures.extract(&img);
        let mean = data.iter().sum::<f64>() / 64.0;
        let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0;
        assert!((f[0] - mean).abs() < 1e-12 && (f[1] - var).abs() < 1e-9);
        // Orthonormal transform: subband energies, weighted by their sizes, add up to the total.
        let total = var * 64.0;
        let parts = (f[2] + f[3] + f[4]) * 16.0 + (f[5] + f[6] + f[7]) * 4.0 + (f[8] + f[9] + f[10]) + f[11];
        assert!((total - parts).abs() < 1e-9);
        // Level-1 HH of the first tile, directly.
        let c = |x: usize, y: usize| data[y * 8 + x] - mean;
        let hh00 = (c(0, 0) - c(1, 0) - c(0, 1) + c(1, 1)) / 2.0;
        let mut hh = 0.0;
        for ty in 0..4 {
            for tx in 0..4 {
                let (x, y) = (2 * tx, 2 * ty);
                let v = (c(x, y) - c(x + 1, y) - c(x, y + 1) + c(x + 1, y + 1)) / 2.0;
                hh += v * v;
            }
        }
        assert!(hh00.is_finite());
        assert!((f[4] - hh / 16.0).abs() < 1e-9);
    }

    #[test]
    fn better_reconstruction_lowers_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut rand_patch = |class| {
            let v: Vec<f64> = (0..16 * 16).map(|_| rng.random_range(0.0..255.0)).collect();
            patch(class, 16, 16, v)
        };
        let a = rand_patch(PatchClass::Manipulated);
        let p = rand_patch(PatchClass::Manipulated);
        let n = rand_patch(PatchClass::NonManipulated);
        let w = LossWeights::new(1.0, 1.0, 1.0).unwrap();
        let f = ReferenceFeatures;
        let d = |x: &Raster, y: &Raster| smape(&f.extract(x), &f.extract(y)).unwrap();
        // Blend from the anchor towards the positive: pulls features to p and away from n.
        let blend = |t: f64| {
            let v = a.pixels.samples().iter().zip(p.pixels.samples()).map(|(x, y)| (1.0 - t) * x + t * y).collect();
            Raster::new(16, 16, 1, v).unwrap()
        };
        let (h0, h1) = (blend(0.3), blend(0.6));
        if d(&h1, &p.pixels) < d(&h0, &p.pixels)
            && d(&h1, &n.pixels) > d(&h0, &n.pixels)
            && smape(a.pixels.samples(), h1.samples()).unwrap() <= smape(a.pixels.samples(), h0.samples()).unwrap()
        {
            assert!(loss(&a, &h1, &p, &n, &w, &f).unwrap() < loss(&a, &h0, &p, &n, &w, &f).unwrap());
        }
        let w_feat = LossWeights::new(0.0, 1.0, 1.0).unwrap();
        let l0 = loss(&a, &h0, &p, &n, &w_feat, &f).unwrap();
        let l1 = loss(&a, &h1, &p, &n, &w_feat, &f).unwrap();
        let expected = (d(&h1, &p.pixels) - d(&h0, &p.pixels)) - (d(&h1, &n.pixels) - d(&h0, &n.pixels));
        assert!(((l1 - l0) - expected).abs() < 1e-12);
    }

    fn half_mask_image() -> (Raster, GtMask) {
        let img = Raster::new(128, 64, 1, (0..128 * 64).map(|i| (i % 97) as f64).collect()).unwrap();
        let m = GtMask::rect(128, 64, 0, 0, 64, 64).unwrap();
        (img, m)
    }

    #[test]
    fn triplets_well_formed_and_deterministic() {
        let (img, m) = half_mask_image();
        let patches = label_patches(&img, &m, 32).unwrap();
        assert_eq!(patches.len(), 8);
        let t = mine_triplets(&img, &m, 32, 10, 5).unwrap();
        for (i, tr) in t.iter().enumerate() {
            let expect = if i % 2 == 0 { PatchClass::Manipulated } else { PatchClass::NonManipulated };
            assert_eq!(tr.anchor.class, expect);
            assert_eq!(tr.positive.class, expect);
            assert_eq!(tr.negative.class, expect.opposite());
            assert!((tr.anchor.x, tr.anchor.y) != (tr.positive.x, tr.positive.y));
        }
        let again = mine_triplets(&img, &m, 32, 10, 5).unwrap();
        let key =
            |v: &[Triplet]| v.iter().map(|t| (t.anchor.x, t.anchor.y, t.positive.x, t.negative.x)).collect::<Vec<_>>();
        assert_eq!(key(&t), key(&again));
    }

    #[test]
    fn mixed_patches_dropped_and_empty_class_errors() {
        let img = Raster::filled(64, 64, 1, 0.0).unwrap();
        assert!(matches!(mine_triplets(&img, &GtMask::empty(64, 64), 32, 4, 1), Err(Error::NoTriplets(_))));
        // 10% coverage of one patch: mixed, dropped.
        let m = GtMask::rect(64, 64, 0, 0, 10, 10).unwrap();
        let p = label_patches(&img, &m, 32).unwrap();
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|q| q.class == PatchClass::NonManipulated));
    }

    proptest! {
        #[test]
        fn smape_properties(pairs in proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 1..40)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let d = smape(&x, &y).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, smape(&y, &x).unwrap());
            prop_assert_eq!(smape(&x, &x).unwrap(), 0.0);
        }
    }
}
