//! Seeded forgery generator with exact ground-truth masks.
//!
//! A [`SynthSpec`] describes the host content, the local manipulation, and the processing
//! chains. Everything random is drawn from ChaCha streams keyed by the spec's seed, so a
//! spec always produces the same bytes.

use image::imageops::{self, FilterType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detectors::cfa::{demosaic_bilinear, mosaic, BayerPattern};
use crate::error::{Error, Result};
use crate::filter::gaussian_blur;
use crate::jpeg::{encode_jpeg, jpeg_roundtrip};
use crate::mask::GtMask;
use crate::raster::Raster;

pub const MAX_CHAIN: usize = 4;
pub const MIN_FRACTION: f64 = 0.02;
pub const MAX_FRACTION: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Gradient,
    Texture,
    #[serde(rename = "demosaiced_rggb")]
    DemosaicedRggb,
    NoiseOverSmooth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Jpeg { quality: u8 },
    Resize { factor: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Region {
    fn overlaps(&self, o: &Region) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    #[cfg(test)]
    fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

fn default_shift() -> [usize; 2] {
    [4, 4]
}

fn default_grid_quality() -> u8 {
    75
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForgeryOp {
    None,
    /// Paste a window of a separately generated donor image.
    Splice {
        donor: BaseKind,
        #[serde(default)]
        donor_chain: Vec<Step>,
    },
    /// Copy a same-sized, non-overlapping window of the host onto the region.
    CopyMove {
        #[serde(default)]
        source: Option<[usize; 2]>,
    },
    BlurRegion {
        sigma: f64,
    },
    NoiseRegion {
        sigma: f64,
    },
    /// Region content is JPEG-compressed on a block grid offset by `shift`.
    GridShiftRegion {
        #[serde(default = "default_shift")]
        shift: [usize; 2],
        #[serde(default = "default_grid_quality")]
        quality: u8,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub base: BaseKind,
    pub width: usize,
    pub height: usize,
    pub op: ForgeryOp,
    /// Required by [`synth`] for every op except `none`; drawn per item by [`corpus`].
    #[serde(default)]
    pub region: Option<Region>,
    /// JPEG steps applied to the host before the manipulation.
    #[serde(default)]
    pub host_chain: Vec<Step>,
    /// Global steps after the manipulation; they never change the mask except for resizing.
    #[serde(default)]
    pub post: Vec<Step>,
    #[serde(default)]
    pub seed: u64,
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidSpec { field: field.into(), reason: reason.into() }
}

fn validate_chain(name: &str, chain: &[Step], allow_resize: bool) -> Result<()> {
    if chain.len() > MAX_CHAIN {
        return Err(invalid(name, format!("at most {MAX_CHAIN} steps, got {}", chain.len())));
    }
    for (i, s) in chain.iter().enumerate() {
        match *s {
            Step::Jpeg { quality } if !(1..=100).contains(&quality) => {
                return Err(invalid(format!("{name}[{i}].quality"), format!("{quality} outside 1..=100")));
            }
            Step::Resize { factor } if !allow_resize => {
                return Err(invalid(format!("{name}[{i}]"), format!("resize ({factor}) not allowed here")));
            }
            Step::Resize { factor } if !(factor > 0.0 && factor <= 4.0) => {
                return Err(invalid(format!("{name}[{i}].factor"), format!("{factor} outside (0, 4]")));
            }
            _ => {}
        }
    }
    Ok(())
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(invalid("width", format!("frame {}x{} below 16x16", self.width, self.height)));
        }
        validate_chain("host_chain", &self.host_chain, false)?;
        validate_chain("post", &self.post, true)?;
        let region = match (&self.op, self.region) {
            (ForgeryOp::None, _) => return Ok(()),
            (_, None) => return Err(invalid("region", "required for this op")),
            (_, Some(r)) => r,
        };
        if region.w == 0 || region.h == 0 {
            return Err(invalid("region", "empty region"));
        }
        if region.x + region.w > self.width || region.y + region.h > self.height {
            return Err(invalid(
                "region",
                format!(
                    "{}x{} at ({}, {}) exceeds the {}x{} frame",
                    region.w, region.h, region.x, region.y, self.width, self.height
                ),
            ));
        }
        match &self.op {
            ForgeryOp::Splice { donor_chain, .. } => validate_chain("op.donor_chain", donor_chain, false)?,
            ForgeryOp::CopyMove { source: Some([sx, sy]) } => {
                let src = Region { x: *sx, y: *sy, ..region };
                if sx + region.w > self.width || sy + region.h > self.height {
                    return Err(invalid("op.source", "source window exceeds the frame"));
                }
                if src.overlaps(&region) {
                    return Err(invalid("op.source", "source overlaps the destination"));
                }
            }
            ForgeryOp::BlurRegion { sigma } | ForgeryOp::NoiseRegion { sigma } if sigma.is_nan() || *sigma <= 0.0 => {
                return Err(invalid("op.sigma", format!("{sigma} must be positive")));
            }
            ForgeryOp::GridShiftRegion { shift, quality } => {
                if shift[0] >= 8 || shift[1] >= 8 || (shift[0] == 0 && shift[1] == 0) {
                    return Err(invalid("op.shift", format!("{shift:?} must be in 0..8 and nonzero")));
                }
                if !(1..=100).contains(quality) {
                    return Err(invalid("op.quality", format!("{quality} outside 1..=100")));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Result of one synthesis. `jpeg` holds the encoded bytes when the post chain ends in a
/// JPEG step; `image` is then their decoded form.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub image: Raster,
    pub mask: GtMask,
    pub jpeg: Option<Vec<u8>>,
}

const STREAM_BASE: u64 = 1;
const STREAM_DONOR: u64 = 2;
const STREAM_OP: u64 = 3;
const STREAM_LAYOUT: u64 = 4;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Sum of sparse lattices at octave spacings 1..=2^(octaves−1), bilinearly interpolated, with
/// amplitude growing with the spacing (a 1/f-like spectrum with heavy-tailed band statistics).
fn fractal(w: usize, h: usize, octaves: std::ops::Range<u32>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for o in octaves {
        let s = 1usize << o;
        let (gw, gh) = (w / s + 2, h / s + 2);
        let lattice: Vec<f64> = (0..gw * gh)
            .map(|_| {
                if rng.random::<f64>() < 0.25 {
                    let mag = -rng.random::<f64>().max(1e-12).ln();
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                } else {
                    0.0
                }
            })
            .collect();
        let amp = (s as f64).powf(0.9);
        for y in 0..h {
            let fy = y as f64 / s as f64;
            let (y0, ty) = (fy.floor() as usize, fy.fract());
            for x in 0..w {
                let fx = x as f64 / s as f64;
                let (x0, tx) = (fx.floor() as usize, fx.fract());
                let v = lattice[y0 * gw + x0] * (1.0 - tx) * (1.0 - ty)
                    + lattice[y0 * gw + x0 + 1] * tx * (1.0 - ty)
                    + lattice[(y0 + 1) * gw + x0] * (1.0 - tx) * ty
                    + lattice[(y0 + 1) * gw + x0 + 1] * tx * ty;
                out[y * w + x] += amp * v;
            }
        }
    }
    out
}

fn standardize(v: &mut [f64], sd: f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    let k = if s > 0.0 { sd / s } else { 0.0 };
    v.iter_mut().for_each(|x| *x = (*x - m) * k);
}

fn texture(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Raster {
    let mut luma = fractal(w, h, 0..7, rng);
    standardize(&mut luma, 32.0);
    let mut cr = fractal(w, h, 4..7, rng);
    standardize(&mut cr, 10.0);
    let mut cb = fractal(w, h, 4..7, rng);
    standardize(&mut cb, 10.0);
    let mut data = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        let l = 124.0 + luma[i];
        data.extend([l + cr[i], l, l + cb[i]]);
    }
    Raster::new(w, h, 3, data).expect("sized buffer")
}

fn gradient(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Raster {
    let phase: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let tilt: f64 = rng.random_range(-1.0..1.0);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let u = x as f64 / w as f64;
            let v = y as f64 / h as f64;
            for (c, p) in phase.iter().enumerate() {
                let base = 70.0 + 90.0 * (0.5 * u + 0.5 * (v * tilt).abs()) + 20.0 * c as f64;
                data.push(base + 15.0 * (std::f64::consts::TAU * (1.3 * u + 0.7 * v + p)).sin());
            }
        }
    }
    Raster::new(w, h, 3, data).expect("sized buffer")
}

/// Unrounded base content.
pub fn base_content(kind: BaseKind, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Result<Raster> {
    Ok(match kind {
        BaseKind::Gradient => gradient(w, h, rng),
        BaseKind::Texture => texture(w, h, rng),
        BaseKind::DemosaicedRggb => {
            let t = texture(w, h, rng).quantize_u8();
            demosaic_bilinear(&mosaic(&t, BayerPattern::Rggb)?, BayerPattern::Rggb)?
        }
        BaseKind::NoiseOverSmooth => {
            let mut g = gradient(w, h, rng);
            let n = Normal::new(0.0, 2.0).expect("valid sigma");
            g.samples_mut().iter_mut().for_each(|v| *v += n.sample(rng));
            g
        }
    }
    .quantize_u8())
}

fn resize(img: &Raster, factor: f64) -> Raster {
    let nw = ((img.width() as f64 * factor).round() as u32).max(1);
    let nh = ((img.height() as f64 * factor).round() as u32).max(1);
    let resized = match img.to_dynamic() {
        image::DynamicImage::ImageLuma8(g) => {
            image::DynamicImage::ImageLuma8(imageops::resize(&g, nw, nh, FilterType::Triangle))
        }
        other => image::DynamicImage::ImageRgb8(imageops::resize(&other.to_rgb8(), nw, nh, FilterType::Triangle)),
    };
    Raster::from_dynamic(&resized).expect("resized buffer")
}

/// Applies `chain` and returns the final image plus the JPEG bytes if the last step was JPEG.
fn apply_chain(mut img: Raster, chain: &[Step]) -> Result<(Raster, Option<Vec<u8>>)> {
    let mut bytes = None;
    for step in chain {
        match *step {
            Step::Jpeg { quality } => {
                let enc = encode_jpeg(&img, quality)?;
                img = Raster::decode(&enc)?;
                bytes = Some(enc);
            }
            Step::Resize { factor } => {
                img = resize(&img, factor);
                bytes = None;
            }
        }
    }
    Ok((img, bytes))
}

fn paste(dst: &mut Raster, src: &Raster, region: &Region, from: (usize, usize)) {
    for y in 0..region.h {
        for x in 0..region.w {
            for c in 0..dst.channels() {
                dst.set(region.x + x, region.y + y, c, src.get(from.0 + x, from.1 + y, c));
            }
        }
    }
}

fn free_source(region: &Region, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Result<(usize, usize)> {
    for _ in 0..10_000 {
        let sx = rng.random_range(0..=w - region.w);
        let sy = rng.random_range(0..=h - region.h);
        if !(Region { x: sx, y: sy, ..*region }).overlaps(region) {
            return Ok((sx, sy));
        }
    }
    Err(invalid("region", "no room for a non-overlapping copy-move source"))
}

pub fn synth(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let raw = base_content(spec.base, w, h, &mut rng_for(spec.seed, STREAM_BASE))?;
    let (mut img, _) = apply_chain(raw.clone(), &spec.host_chain)?;
    let mut op_rng = rng_for(spec.seed, STREAM_OP);

    let mask = match spec.region {
        Some(r) if spec.op != ForgeryOp::None => GtMask::rect(w, h, r.x, r.y, r.w, r.h)?,
        _ => GtMask::empty(w, h),
    };
    if let Some(region) = spec.region {
        match &spec.op {
            ForgeryOp::None => {}
            ForgeryOp::Splice { donor, donor_chain } => {
                let d = base_content(*donor, w, h, &mut rng_for(spec.seed, STREAM_DONOR))?;
                let (d, _) = apply_chain(d, donor_chain)?;
                let ox = op_rng.random_range(0..=w - region.w);
                let oy = op_rng.random_range(0..=h - region.h);
                paste(&mut img, &d, &region, (ox, oy));
            }
            ForgeryOp::CopyMove { source } => {
                let from = match source {
                    Some([sx, sy]) => (*sx, *sy),
                    None => free_source(&region, w, h, &mut op_rng)?,
                };
                let src = img.clone();
                paste(&mut img, &src, &region, from);
            }
            ForgeryOp::BlurRegion { sigma } => {
                let planes = img.planes().iter().map(|p| gaussian_blur(p, *sigma)).collect::<Result<Vec<_>>>()?;
                let blurred = Raster::from_planes(&planes)?.quantize_u8();
                paste(&mut img, &blurred, &region, (region.x, region.y));
            }
            ForgeryOp::NoiseRegion { sigma } => {
                let n = Normal::new(0.0, *sigma).map_err(|e| invalid("op.sigma", e.to_string()))?;
                for y in region.y..region.y + region.h {
                    for x in region.x..region.x + region.w {
                        for c in 0..img.channels() {
                            let v = img.get(x, y, c) + n.sample(&mut op_rng);
                            img.set(x, y, c, v.round().clamp(0.0, 255.0));
                        }
                    }
                }
            }
            ForgeryOp::GridShiftRegion { shift, quality } => {
                // Pad left/top so the encoder's block grid lands on x ≡ shift (mod 8).
                let (px, py) = ((8 - shift[0]) % 8, (8 - shift[1]) % 8);
                let ch = raw.channels();
                let padded = Raster::new(
                    w + px,
                    h + py,
                    ch,
                    (0..h + py)
                        .flat_map(|y| (0..w + px).flat_map(move |x| (0..ch).map(move |c| (x, y, c))))
                        .map(|(x, y, c)| raw.get(x.saturating_sub(px), y.saturating_sub(py), c))
                        .collect(),
                )?;
                let shifted = jpeg_roundtrip(&padded, *quality)?;
                for y in region.y..region.y + region.h {
                    for x in region.x..region.x + region.w {
                        for c in 0..ch {
                            img.set(x, y, c, shifted.get(x + px, y + py, c));
                        }
                    }
                }
            }
        }
    }

    let (image, jpeg) = apply_chain(img, &spec.post)?;
    let mask = if image.dims() != mask.dims() { mask.resize_nearest(image.width(), image.height()) } else { mask };
    Ok(SynthOutput { image, mask, jpeg })
}

/// Per-item record of a corpus draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub index: usize,
    pub id: String,
    pub seed: u64,
    pub pristine: bool,
    /// Manipulated fraction of the mask before any resize.
    pub fraction: f64,
    pub spec: SynthSpec,
}

#[derive(Clone, Debug)]
pub struct CorpusItem {
    pub meta: ItemMeta,
    pub output: SynthOutput,
}

/// Rectangle covering a fraction of the frame drawn uniformly from the allowed band.
pub fn draw_region(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Region {
    let total = (w * h) as f64;
    let target = rng.random_range(MIN_FRACTION..=MAX_FRACTION) * total;
    let aspect: f64 = rng.random_range(0.6..=1.6);
    let rw = ((target * aspect).sqrt().round() as usize).clamp(1, w);
    let mut rh = ((target / rw as f64).round() as usize).clamp(1, h);
    while (rw * rh) as f64 > MAX_FRACTION * total && rh > 1 {
        rh -= 1;
    }
    while ((rw * rh) as f64) < MIN_FRACTION * total && rh < h {
        rh += 1;
    }
    let x = rng.random_range(0..=w - rw);
    let y = rng.random_range(0..=h - rh);
    Region { x, y, w: rw, h: rh }
}

/// Item spec for index `i`: derived seed `seed ^ i`. A manipulation without a fixed region
/// in the template gets a drawn one (and a drawn copy-move source).
pub fn item_spec(template: &SynthSpec, index: usize, seed: u64) -> SynthSpec {
    let item_seed = seed ^ index as u64;
    let mut spec = template.clone();
    spec.seed = item_seed;
    if spec.op == ForgeryOp::None {
        spec.region = None;
        return spec;
    }
    let mut rng = rng_for(item_seed, STREAM_LAYOUT);
    let region = *spec.region.get_or_insert_with(|| draw_region(spec.width, spec.height, &mut rng));
    if let ForgeryOp::CopyMove { source } = &mut spec.op {
        if source.is_none() {
            if let Ok((sx, sy)) = free_source(&region, spec.width, spec.height, &mut rng) {
                *source = Some([sx, sy]);
            }
        }
    }
    spec
}

/// `n` items generated in parallel and returned in index order.
pub fn corpus(template: &SynthSpec, n: usize, seed: u64) -> Result<Vec<CorpusItem>> {
    if n == 0 {
        return Err(Error::InvalidArgument("corpus size must be at least 1".into()));
    }
    template.validate_template()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let spec = item_spec(template, i, seed);
            let output = synth(&spec)?;
            let fraction = match spec.region {
                Some(r) => (r.w * r.h) as f64 / (spec.width * spec.height) as f64,
                None => 0.0,
            };
            let meta = ItemMeta {
                index: i,
                id: format!("img{i:05}"),
                seed: spec.seed,
                pristine: spec.op == ForgeryOp::None,
                fraction,
                spec,
            };
            Ok(CorpusItem { meta, output })
        })
        .collect()
}

impl SynthSpec {
    /// Validates a corpus template; a missing region is fine since items draw their own.
    fn validate_template(&self) -> Result<()> {
        let mut probe = self.clone();
        if probe.op != ForgeryOp::None && probe.region.is_none() {
            probe.region = Some(Region { x: 0, y: 0, w: 1, h: 1 });
            if let ForgeryOp::CopyMove { source } = &mut probe.op {
                *source = None;
            }
        }
        probe.validate()
    }
}

/// SHA-256 over the serialized metadata of every item, in order.
pub fn metadata_digest(items: &[ItemMeta]) -> String {
    let mut h = Sha256::new();
    for m in items {
        h.update(serde_json::to_vec(m).expect("metadata serializes"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
