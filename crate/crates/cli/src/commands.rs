//! The four subcommands as library functions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::Serialize;
use tamperscope_core::aen::{loss, mine_triplets, LossWeights, ReferenceFeatures};
use tamperscope_core::detectors::Detector;
use tamperscope_core::scoring::{aggregate, score_image, ScoreRow};
use tamperscope_core::synth::{corpus, metadata_digest, ItemMeta, SynthSpec};
use tamperscope_core::{GtMask, HeatMap, Raster};

use crate::error::CliError;
use crate::fsio::write_atomic;
use crate::index::{write_index, DatasetIndex, IndexRow};
use crate::report::{sha256_hex, Report, ReportParams, RowError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INDEX_FILE: &str = "index.csv";
pub const METADATA_FILE: &str = "metadata.json";

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    if jobs == 0 {
        return Err(CliError::Invalid("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start {jobs} workers: {e}")))
}

pub fn heatmap_path(out: &Path, detector: Detector, id: &str) -> PathBuf {
    out.join(detector.name()).join(format!("{id}.png"))
}

#[derive(Clone, Debug)]
pub struct DetectConfig {
    pub detectors: Vec<Detector>,
    pub index: PathBuf,
    pub out: PathBuf,
    pub jobs: usize,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Skipped {
    pub id: String,
    /// Empty when the image itself could not be decoded.
    pub detector: String,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct ImageTiming {
    id: String,
    timings_ms: BTreeMap<String, f64>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    detectors: Vec<&'static str>,
    index_digest: &'a str,
    jobs: usize,
    images: Vec<ImageTiming>,
    skipped: &'a [Skipped],
}

#[derive(Clone, Debug)]
pub struct DetectSummary {
    pub written: usize,
    pub skipped: Vec<Skipped>,
}

impl DetectSummary {
    pub fn is_partial(&self) -> bool {
        !self.skipped.is_empty()
    }
}

pub fn cmd_detect(cfg: &DetectConfig) -> Result<DetectSummary, CliError> {
    if cfg.detectors.is_empty() {
        return Err(CliError::Invalid("no detector selected".into()));
    }
    let index = DatasetIndex::load(&cfg.index)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(format!("cannot create {}", cfg.out.display()), e))?;
    let workers = pool(cfg.jobs)?;
    info!("detect: {} images x {} detectors on {} workers", index.rows.len(), cfg.detectors.len(), cfg.jobs);

    let results: Vec<Result<DetectedImage, CliError>> =
        workers.install(|| index.rows.par_iter().map(|row| detect_one(row, &cfg.detectors, &cfg.out)).collect());
    let mut images = Vec::new();
    let mut skipped = Vec::new();
    let mut written = 0;
    for r in results {
        let (timing, skip, n) = r?;
        images.push(timing);
        skipped.extend(skip);
        written += n;
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        detectors: cfg.detectors.iter().map(|d| d.name()).collect(),
        index_digest: &index.digest,
        jobs: cfg.jobs,
        images,
        skipped: &skipped,
    };
    let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&cfg.out.join(MANIFEST_FILE), &bytes)?;
    Ok(DetectSummary { written, skipped })
}

/// Timing, skipped detectors and number of heatmaps written for one image.
type DetectedImage = (ImageTiming, Vec<Skipped>, usize);

fn detect_one(row: &IndexRow, detectors: &[Detector], out: &Path) -> Result<DetectedImage, CliError> {
    let mut timing = ImageTiming { id: row.image_id.clone(), timings_ms: BTreeMap::new() };
    let img = match Raster::load(&row.image_path) {
        Ok(img) => img,
        Err(e) => {
            warn!("skipping {}: {e}", row.image_id);
            let s = Skipped { id: row.image_id.clone(), detector: String::new(), reason: e.to_string() };
            return Ok((timing, vec![s], 0));
        }
    };
    let mut skipped = Vec::new();
    let mut written = 0;
    for &d in detectors {
        let t = Instant::now();
        match d.run(&img) {
            Ok(h) => {
                write_atomic(&heatmap_path(out, d, &row.image_id), &h.encode_png()?)?;
                written += 1;
            }
            Err(e) => {
                warn!("{d} failed on {}: {e}", row.image_id);
                skipped.push(Skipped { id: row.image_id.clone(), detector: d.name().into(), reason: e.to_string() });
            }
        }
        let ms = t.elapsed().as_secs_f64() * 1e3;
        debug!("{d} on {}: {ms:.1} ms", row.image_id);
        timing.timings_ms.insert(d.name().into(), ms);
    }
    Ok((timing, skipped, written))
}

#[derive(Clone, Debug)]
pub struct ScoreConfig {
    pub pred: PathBuf,
    pub index: PathBuf,
    pub out: PathBuf,
    pub pristine: bool,
    pub kernel: usize,
    /// Detectors to score; `None` scores every detector directory found under `pred`.
    pub detectors: Option<Vec<Detector>>,
}

/// Detector directories present under a prediction directory, in name order.
pub fn discover_detectors(pred: &Path) -> Result<Vec<Detector>, CliError> {
    let entries = std::fs::read_dir(pred).map_err(|e| CliError::io(format!("cannot read {}", pred.display()), e))?;
    let mut found: Vec<Detector> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.parse().ok()))
        .collect();
    found.sort_by_key(|d| d.name());
    Ok(found)
}

pub fn cmd_score(cfg: &ScoreConfig) -> Result<Report, CliError> {
    if cfg.kernel == 0 || cfg.kernel.is_multiple_of(2) {
        return Err(CliError::Invalid(format!("--kernel {} must be odd and positive", cfg.kernel)));
    }
    let index = DatasetIndex::load(&cfg.index)?;
    let mut detectors = match &cfg.detectors {
        Some(d) => d.clone(),
        None => discover_detectors(&cfg.pred)?,
    };
    detectors.sort_by_key(|d| d.name());
    detectors.dedup();
    if detectors.is_empty() {
        return Err(CliError::Invalid(format!("no detector heatmaps under {}", cfg.pred.display())));
    }
    let jobs: Vec<(&IndexRow, Detector)> =
        index.rows.iter().flat_map(|r| detectors.iter().map(move |&d| (r, d))).collect();
    let outcomes: Vec<Result<ScoreRow, RowError>> = jobs.par_iter().map(|&(row, d)| score_one(row, d, cfg)).collect();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(e) => {
                warn!("{} / {}: {}", e.id, e.detector, e.reason);
                errors.push(e);
            }
        }
    }
    let agg = if rows.is_empty() { Vec::new() } else { aggregate(&rows)? };
    let params = ReportParams {
        detectors: detectors.iter().map(|d| d.name().to_string()).collect(),
        kernel: cfg.kernel,
        pristine: cfg.pristine,
        index_digest: index.digest.clone(),
    };
    let report = Report::build(params, rows, agg, errors);
    write_atomic(&cfg.out, &report.to_json())?;
    Ok(report)
}

fn score_one(row: &IndexRow, d: Detector, cfg: &ScoreConfig) -> Result<ScoreRow, RowError> {
    let fail = |reason: String| RowError { id: row.image_id.clone(), detector: d.name().into(), reason };
    let path = heatmap_path(&cfg.pred, d, &row.image_id);
    if !path.exists() {
        return Err(fail(format!("missing heatmap {}", path.display())));
    }
    let pred = HeatMap::load(&path).map_err(|e| fail(e.to_string()))?;
    let mask = if cfg.pristine || row.pristine {
        None
    } else {
        let mp = row.mask_path.as_ref().ok_or_else(|| fail("row has neither a mask nor the pristine flag".into()))?;
        Some(GtMask::load(mp).map_err(|e| fail(e.to_string()))?)
    };
    let s = score_image(mask.as_ref(), &pred, cfg.kernel).map_err(|e| fail(e.to_string()))?;
    Ok(ScoreRow { id: row.image_id.clone(), detector: d.name().into(), gwl1: s.gwl1, auc: s.auc })
}

/// Parses a spec file, reporting the offending field path and position on failure.
pub fn parse_spec(bytes: &[u8]) -> Result<SynthSpec, CliError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut field = e.path().to_string();
        let inner = e.into_inner();
        if field == "op" {
            if let Some(k) = serde_json::from_slice::<serde_json::Value>(bytes).ok().and_then(|v| blame_op_field(&v)) {
                field = format!("op.{k}");
            }
        }
        CliError::Spec { field, reason: format!("{inner} (line {}, column {})", inner.line(), inner.column()) }
    })
}

/// The op is internally tagged, so serde reports errors at `op` only. The culprit is the
/// field whose removal makes the op parse or turns the error into "missing field".
fn blame_op_field(root: &serde_json::Value) -> Option<String> {
    use tamperscope_core::synth::ForgeryOp;
    let op = root.get("op")?.as_object()?;
    op.keys().filter(|k| *k != "kind").find_map(|k| {
        let mut probe = op.clone();
        probe.remove(k);
        match serde_json::from_value::<ForgeryOp>(probe.into()) {
            Ok(_) => Some(k.clone()),
            Err(e) if e.to_string().contains(&format!("missing field `{k}`")) => Some(k.clone()),
            Err(_) => None,
        }
    })
}

fn spec_error(e: tamperscope_core::Error) -> CliError {
    match e {
        tamperscope_core::Error::InvalidSpec { field, reason } => CliError::Spec { field, reason },
        other => CliError::Core(other),
    }
}

#[derive(Clone, Debug)]
pub struct SynthSummary {
    pub items: usize,
    pub digest: String,
}

pub fn cmd_synth(spec_path: &Path, n: usize, seed: u64, out: &Path) -> Result<SynthSummary, CliError> {
    let bytes = std::fs::read(spec_path)
        .map_err(|e| CliError::Invalid(format!("cannot read spec {}: {e}", spec_path.display())))?;
    let spec = parse_spec(&bytes)?;
    if n == 0 {
        return Err(CliError::Invalid("--n must be at least 1".into()));
    }
    let items = corpus(&spec, n, seed).map_err(spec_error)?;
    let mut rows = Vec::with_capacity(items.len());
    let mut metas: Vec<ItemMeta> = Vec::with_capacity(items.len());
    for item in &items {
        let id = &item.meta.id;
        let (rel, bytes) = match &item.output.jpeg {
            Some(j) => (format!("images/{id}.jpg"), j.clone()),
            None => (format!("images/{id}.png"), item.output.image.encode_png()?),
        };
        write_atomic(&out.join(&rel), &bytes)?;
        let mask_rel = if item.meta.pristine {
            None
        } else {
            let r = format!("masks/{id}.png");
            write_atomic(&out.join(&r), &item.output.mask.encode_png()?)?;
            Some(PathBuf::from(r))
        };
        rows.push(IndexRow {
            image_id: id.clone(),
            image_path: rel.into(),
            mask_path: mask_rel,
            pristine: item.meta.pristine,
        });
        metas.push(item.meta.clone());
    }
    let index_bytes = write_index(&rows)?;
    write_atomic(&out.join(INDEX_FILE), &index_bytes)?;
    let digest = metadata_digest(&metas);
    let meta_doc = serde_json::json!({ "digest": digest, "items": metas });
    write_atomic(&out.join(METADATA_FILE), &serde_json::to_vec_pretty(&meta_doc).expect("metadata serializes"))?;
    info!("synth: {} items, index digest {}", items.len(), sha256_hex(&index_bytes));
    Ok(SynthSummary { items: items.len(), digest })
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AenSummary {
    pub triplets: usize,
    pub mean_loss: f64,
    pub losses: Vec<f64>,
}

/// Loss of each mined triplet with the anchor standing in for its own reconstruction.
pub fn cmd_aen_loss(
    image: &Path,
    mask: &Path,
    weights: LossWeights,
    patch: usize,
    count: usize,
    seed: u64,
) -> Result<AenSummary, CliError> {
    let img = Raster::load(image)?;
    let m = GtMask::load(mask)?;
    let triplets = mine_triplets(&img, &m, patch, count, seed)?;
    let f = ReferenceFeatures;
    let losses = triplets
        .iter()
        .map(|t| loss(&t.anchor, &t.anchor.pixels, &t.positive, &t.negative, &weights, &f))
        .collect::<Result<Vec<f64>, _>>()?;
    let mean_loss = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
    Ok(AenSummary { triplets: losses.len(), mean_loss, losses })
}

/// `all` or a comma-separated list of detector names.
pub fn parse_algos(s: &str) -> Result<Vec<Detector>, CliError> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Detector::ALL.to_vec());
    }
    let mut v = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let d: Detector = part.parse().map_err(|e: tamperscope_core::Error| CliError::Invalid(e.to_string()))?;
        if !v.contains(&d) {
            v.push(d);
        }
    }
    if v.is_empty() {
        return Err(CliError::Invalid("no detector selected".into()));
    }
    Ok(v)
}

pub fn parse_weights(s: &str) -> Result<LossWeights, CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Invalid(format!("--weights '{s}': {e}")))?;
    match parts.as_slice() {
        [w0, w1, w2] => Ok(LossWeights::new(*w0, *w1, *w2)?),
        _ => Err(CliError::Invalid(format!("--weights needs three values, got {}", parts.len()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algo_lists() {
        assert_eq!(parse_algos("all").unwrap().len(), 8);
        assert_eq!(parse_algos("ela, noi2,ela").unwrap(), vec![Detector::Ela, Detector::Noi2]);
        assert!(parse_algos("ela,bogus").is_err());
        assert!(parse_algos("").is_err());
    }

    #[test]
    fn weights() {
        let w = parse_weights("1,0.5,2").unwrap();
        assert_eq!((w.w0, w.w1, w.w2), (1.0, 0.5, 2.0));
        assert!(parse_weights("1,2").is_err());
        assert!(parse_weights("0,0,0").is_err());
    }

    #[test]
    fn spec_errors_name_the_field() {
        let bad = br#"{"base":"texture","width":64,"height":64,"op":{"kind":"blur_region","sigma":"x"}}"#;
        match parse_spec(bad) {
            Err(CliError::Spec { field, .. }) => assert_eq!(field, "op.sigma"),
            other => panic!("{other:?}"),
        }
    }
}
