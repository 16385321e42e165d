//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line to stderr; the test fails
//! if any criterion fails. Run alone for meaningful timings:
//!
//! ```text
//! cargo test --release -p tamperscope --test acceptance -- --nocapture
//! ```

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use tamperscope_core::aen::{loss, smape, FeatureExtractor, LossWeights, Patch, PatchClass, ReferenceFeatures};
use tamperscope_core::dct::{block_dct8, to_zigzag, BlockDctGrid};
use tamperscope_core::detectors::noise::{noi1_sigma, noi2_variance, DEFAULT_NOI1_BLOCK};
use tamperscope_core::detectors::qtable::estimate_qtable;
use tamperscope_core::detectors::Detector;
use tamperscope_core::jpeg::scaled_luma_table;
use tamperscope_core::scoring::{auc, gwl1, no_score_weights, score_image};
use tamperscope_core::synth::{corpus, SynthSpec};
use tamperscope_core::{to_luma, GtMask, HeatMap, Luma, Raster};

struct Outcome {
    pass: bool,
    detail: String,
}

/// `TAMPERSCOPE_ACCEPTANCE=AC3,AC6` restricts the run to the listed criteria.
fn selected(name: &str) -> bool {
    match std::env::var("TAMPERSCOPE_ACCEPTANCE") {
        Ok(list) if !list.trim().is_empty() => list.split(',').any(|s| s.trim().eq_ignore_ascii_case(name)),
        _ => true,
    }
}

fn check(name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    if !selected(name) {
        let _ = std::io::stderr().write_all(format!("SKIP {name}: not selected\n").as_bytes());
        return true;
    }
    let t = Instant::now();
    let o = f();
    let took = t.elapsed();
    let in_time = took <= limit;
    let pass = o.pass && in_time;
    let line = format!(
        "{} {name}: {} [{:.2}s, limit {}s{}]\n",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", over time" }
    );
    // Written straight to the handle so the line survives the harness's output capture.
    let _ = std::io::stderr().write_all(line.as_bytes());
    pass
}

// ---------------------------------------------------------------------------------------
// AC1: brute-force metric oracles

fn oracle_morph(m: &GtMask, se: usize, erode: bool) -> Vec<bool> {
    let (w, h) = m.dims();
    let r = (se / 2) as isize;
    let mut out = vec![false; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut all = true;
            let mut any = false;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (xx, yy) = (x + dx, y + dy);
                    let inside = xx >= 0 && yy >= 0 && xx < w as isize && yy < h as isize;
                    let v = inside && m.get(xx as usize, yy as usize);
                    all &= v;
                    any |= v;
                }
            }
            out[y as usize * w + x as usize] = if erode { all } else { any };
        }
    }
    out
}

/// Enumerates the scored pixel sets and averages |truth - prediction| in 8-bit units.
fn oracle_gwl1(m: &GtMask, levels: &[u8], se: usize) -> f64 {
    let er = oracle_morph(m, se, true);
    let dil = oracle_morph(m, se, false);
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..levels.len() {
        if er[i] || !dil[i] {
            let truth = if m.bits()[i] { 255.0 } else { 0.0 };
            sum += (truth - f64::from(levels[i])).abs() / 255.0;
            n += 1;
        }
    }
    sum / n as f64
}

/// Mann-Whitney statistic: P(positive > negative) + P(tie)/2.
fn oracle_auc(m: &GtMask, levels: &[u8], se: usize) -> Option<f64> {
    let er = oracle_morph(m, se, true);
    let dil = oracle_morph(m, se, false);
    let pos: Vec<u8> = (0..levels.len()).filter(|&i| er[i]).map(|i| levels[i]).collect();
    let neg: Vec<u8> = (0..levels.len()).filter(|&i| !dil[i]).map(|i| levels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut s = 0.0;
    for &p in &pos {
        for &q in &neg {
            s += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(s / (pos.len() * neg.len()) as f64)
}

fn random_pair(rng: &mut ChaCha8Rng) -> (GtMask, Vec<u8>) {
    let (w, h) = (16, 16);
    let mut bits = vec![false; w * h];
    for _ in 0..rng.random_range(1..=3) {
        let (rw, rh) = (rng.random_range(3..=10), rng.random_range(3..=10));
        let (x0, y0) = (rng.random_range(0..=w - rw), rng.random_range(0..=h - rh));
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                bits[y * w + x] = true;
            }
        }
    }
    let m = GtMask::from_bools(w, h, bits).unwrap();
    // Coarse levels give plenty of ties.
    let step = [1u8, 5, 17, 51][rng.random_range(0..4)];
    let levels = (0..w * h).map(|_| (rng.random_range(0..=255u32) as u8 / step) * step).collect();
    (m, levels)
}

fn ac1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC1);
    let (mut done, mut worst, mut bad) = (0, 0.0f64, 0);
    while done < 100 {
        let (m, levels) = random_pair(&mut rng);
        let se = [1usize, 3, 5][rng.random_range(0..3)];
        let Some(want_auc) = oracle_auc(&m, &levels, se) else { continue };
        let pred = HeatMap::from_u8(16, 16, &levels).unwrap();
        let w = no_score_weights(&m, se).unwrap();
        let dg = (gwl1(&m, &pred, &w).unwrap() - oracle_gwl1(&m, &levels, se)).abs();
        let da = (auc(&m, &pred, &w).unwrap() - want_auc).abs();
        worst = worst.max(dg).max(da);
        if dg > 1e-9 || da > 1e-9 {
            bad += 1;
        }
        done += 1;
    }
    Outcome { pass: bad == 0, detail: format!("metric oracles, 100 pairs, max |Δ| {worst:.1e}, {bad} over 1e-9") }
}

// ---------------------------------------------------------------------------------------
// AC2: quantization table recovery

/// A 512x512 image whose block DCT coefficients are Laplacian draws quantized with the q=75
/// luminance table, decoded back to integer pixels.
fn quantized_image(table_zz: &[f64; 64], seed: u64) -> Luma {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = 512;
    let blocks = side / 8;
    let coeffs = (0..blocks * blocks)
        .map(|_| {
            let mut c = [0.0; 64];
            for (j, v) in c.iter_mut().enumerate() {
                let q = table_zz[j];
                let u: f64 = rng.random_range(-0.5..0.5);
                let lap = -q * u.signum() * (1.0 - 2.0 * u.abs()).ln();
                *v = q * (lap / q).round();
            }
            c
        })
        .collect();
    let grid = BlockDctGrid { blocks_wide: blocks, blocks_high: blocks, origin: (0, 0), level_shift: true, coeffs };
    let mut img = Luma::filled(side, side, 0.0);
    grid.write_into(&mut img);
    img.map(f64::round)
}

fn ac2() -> Outcome {
    let natural = scaled_luma_table(75).unwrap();
    let table = to_zigzag(&natural.map(f64::from));
    let img = quantized_image(&table, 75);
    let est = estimate_qtable(&block_dct8(&img, 0, 0, true).unwrap()).unwrap();
    let hits = est.steps.iter().zip(&table).filter(|(&s, &t)| f64::from(s) == t).count();
    Outcome { pass: hits * 100 >= 64 * 90, detail: format!("qtable q=75, {hits}/64 steps exact (need ≥ 58)") }
}

// ---------------------------------------------------------------------------------------
// AC3: noise level estimation

/// Gentle ramp plus Gaussian noise, kept unrounded: on integer pixels the diagonal Haar
/// coefficients sit on a 0.5 lattice and the MAD median of σ=2 noise snaps to it.
fn noisy_flat(sigma: f64, seed: u64) -> Luma {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma).unwrap();
    Luma::from_fn(512, 512, |x, y| 100.0 + 0.05 * x as f64 + 0.03 * y as f64 + n.sample(&mut rng))
}

fn ac3() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (k, sigma) in [2.0, 5.0, 10.0].into_iter().enumerate() {
        let est = noi1_sigma(&noisy_flat(sigma, 300 + k as u64), DEFAULT_NOI1_BLOCK).unwrap();
        let ok = est.sigma.iter().filter(|&&s| ((s - sigma) / sigma).abs() <= 0.15).count();
        let frac = ok as f64 / est.sigma.len() as f64;
        pass &= frac >= 0.90;
        parts.push(format!("NOI1 σ={sigma}: {:.1}% of blocks within 15%", 100.0 * frac));
    }
    let spec: SynthSpec =
        serde_json::from_str(r#"{"base":"texture","width":512,"height":512,"op":{"kind":"noise_region","sigma":5.0}}"#)
            .unwrap();
    let mut worst = f64::INFINITY;
    for item in corpus(&spec, 4, 33).unwrap() {
        let (g, v) = noi2_variance(&to_luma(&item.output.image).unwrap()).unwrap();
        let c = (g.window_px - g.window_step) / 2 + g.window_step / 2;
        let (mut inside, mut outside) = (Vec::new(), Vec::new());
        for j in 0..g.windows_high {
            for i in 0..g.windows_wide {
                let val = v[j * g.windows_wide + i];
                if item.output.mask.get(i * g.window_step + c, j * g.window_step + c) {
                    inside.push(val);
                } else {
                    outside.push(val);
                }
            }
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        worst = worst.min(mean(&inside) / mean(&outside));
    }
    pass &= worst >= 1.5;
    parts.push(format!("NOI2 region/background σ̂² ≥ {worst:.2}x over 4 images (need ≥ 1.5x)"));
    Outcome { pass, detail: parts.join("; ") }
}

// ---------------------------------------------------------------------------------------
// AC4 / AC5: synthetic corpora

const KERNEL: usize = 15;
const CORPUS_SEED: u64 = 1234;

struct CorpusScores {
    auc_mean: f64,
    frac_above_half: f64,
}

fn run_corpus(det: Detector, template: &str, n: usize) -> CorpusScores {
    let spec: SynthSpec = serde_json::from_str(template).unwrap();
    let pristine = spec.op == tamperscope_core::synth::ForgeryOp::None;
    let items = corpus(&spec, n, CORPUS_SEED).unwrap();
    let per: Vec<(f64, usize, usize)> = items
        .par_iter()
        .map(|it| {
            let h = det.run(&it.output.image).unwrap();
            let m = if pristine { None } else { Some(&it.output.mask) };
            let s = score_image(m, &h, KERNEL).unwrap();
            (s.auc, h.scores().iter().filter(|&&v| v > 0.5).count(), h.scores().len())
        })
        .collect();
    let auc_mean = per.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let above: usize = per.iter().map(|p| p.1).sum();
    let total: usize = per.iter().map(|p| p.2).sum();
    CorpusScores { auc_mean, frac_above_half: above as f64 / total as f64 }
}

fn matched_template(det: Detector) -> &'static str {
    match det {
        Detector::Ela => {
            r#"{"base":"texture","width":512,"height":512,"host_chain":[{"jpeg":{"quality":75}},{"jpeg":{"quality":75}}],
                "op":{"kind":"splice","donor":"texture"}}"#
        }
        Detector::Dct => {
            r#"{"base":"texture","width":512,"height":512,"host_chain":[{"jpeg":{"quality":60}}],
                "op":{"kind":"splice","donor":"texture"}}"#
        }
        Detector::Blk => {
            r#"{"base":"texture","width":512,"height":512,"host_chain":[{"jpeg":{"quality":75}}],
                "op":{"kind":"grid_shift_region"}}"#
        }
        Detector::Cfa1 | Detector::Cfa2 => {
            r#"{"base":"demosaiced_rggb","width":512,"height":512,"op":{"kind":"splice","donor":"texture"}}"#
        }
        Detector::Noi1 | Detector::Noi2 => {
            r#"{"base":"texture","width":512,"height":512,"op":{"kind":"noise_region","sigma":5.0}}"#
        }
        Detector::Noi4 => r#"{"base":"texture","width":512,"height":512,"op":{"kind":"blur_region","sigma":2.0}}"#,
    }
}

fn ac4() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for det in Detector::ALL {
        let floor = match det {
            Detector::Blk | Detector::Noi4 | Detector::Cfa1 => 0.60,
            // CFA2 carries its own stronger floor on the demosaiced corpus.
            Detector::Cfa2 => 0.80,
            _ => 0.70,
        };
        let s = run_corpus(det, matched_template(det), 50);
        pass &= s.auc_mean >= floor;
        parts.push(format!("{det} {:.3}/{floor:.2}", s.auc_mean));
    }
    Outcome { pass, detail: format!("matched corpora, 50 images each, mean AUC/floor: {}", parts.join(", ")) }
}

fn ac5() -> Outcome {
    let template = r#"{"base":"texture","width":512,"height":512,"op":{"kind":"none"}}"#;
    let mut pass = true;
    let mut parts = Vec::new();
    for det in Detector::ALL {
        let s = run_corpus(det, template, 50);
        pass &= s.auc_mean <= 0.5;
        parts.push(format!("{det} {:.3}", s.auc_mean));
        if det == Detector::Noi2 {
            pass &= s.frac_above_half <= 0.10;
            parts.push(format!("noi2 >0.5 on {:.3}% of pixels (need ≤ 10%)", 100.0 * s.frac_above_half));
        }
    }
    Outcome { pass, detail: format!("pristine corpus, 50 images, mean AUC ≤ 0.5: {}", parts.join(", ")) }
}

// ---------------------------------------------------------------------------------------
// AC6: loss mathematics

struct MeanOnly;

impl FeatureExtractor for MeanOnly {
    fn extract(&self, img: &Raster) -> Vec<f64> {
        vec![img.samples().iter().sum::<f64>() / img.samples().len() as f64]
    }
}

fn patch(px: &[f64], side: usize, class: PatchClass) -> Patch {
    Patch { x: 0, y: 0, class, pixels: Raster::new(side, side, 1, px.to_vec()).unwrap() }
}

fn ac6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC6);
    let mut failures = Vec::new();

    let mut smape_bad = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=32);
        let scale = [1e-6, 1.0, 1e3][rng.random_range(0..3)];
        let x: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let (dxy, dyx, dxx) = (smape(&x, &y).unwrap(), smape(&y, &x).unwrap(), smape(&x, &x).unwrap());
        if !(0.0..=1.0).contains(&dxy) || dxy != dyx || dxx != 0.0 {
            smape_bad += 1;
        }
    }
    if smape_bad > 0 {
        failures.push(format!("{smape_bad} smape property violations"));
    }

    // 2x2 toy: a = [1,2,3,4], â = [1,2,3,6], p = [2,2,2,2], n = [8,8,8,8], mean extractor.
    let a = patch(&[1.0, 2.0, 3.0, 4.0], 2, PatchClass::Manipulated);
    let a_hat = Raster::new(2, 2, 1, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
    let p = patch(&[2.0; 4], 2, PatchClass::Manipulated);
    let n = patch(&[8.0; 4], 2, PatchClass::NonManipulated);
    let w = LossWeights::new(1.0, 0.5, 0.25).unwrap();
    // Pixel term: (2/10)/4 = 0.05. Mean of â is 3: |3-2|/5 = 0.2 and |3-8|/11 = 5/11.
    let d0 = (2.0 / (10.0 + 1e-8)) / 4.0;
    let d1 = 1.0 / (5.0 + 1e-8);
    let d2 = 5.0 / (11.0 + 1e-8);
    let want = 1.0 * d0 + 0.5 * d1 - 0.25 * d2;
    let got = loss(&a, &a_hat, &p, &n, &w, &MeanOnly).unwrap();
    if (got - want).abs() > 1e-12 {
        failures.push(format!("toy loss {got} vs hand {want}"));
    }

    // Perturb one operand at a time; the loss must move by exactly w_k times the change
    // in that operand's distance, in the stated direction.
    let f = ReferenceFeatures;
    let side = 8;
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..side * side).map(|_| rng.random_range(0.0..255.0)).collect() };
    let (mut trials, mut attempts, mut mono_bad) = (0, 0, 0);
    while trials < 100 && attempts < 10_000 {
        attempts += 1;
        let w = LossWeights::new(rng.random_range(0.1..2.0), rng.random_range(0.1..2.0), rng.random_range(0.1..2.0))
            .unwrap();
        let a = patch(&draw(&mut rng), side, PatchClass::Manipulated);
        let a_hat = Raster::new(side, side, 1, draw(&mut rng)).unwrap();
        let p = patch(&draw(&mut rng), side, PatchClass::Manipulated);
        let n = patch(&draw(&mut rng), side, PatchClass::NonManipulated);
        let base = loss(&a, &a_hat, &p, &n, &w, &f).unwrap();
        let fh = f.extract(&a_hat);
        let which = trials % 3;
        let target = [&a, &p, &n][which];
        let moved: Vec<f64> = target.pixels.samples().iter().map(|v| v + rng.random_range(-40.0..40.0)).collect();
        let moved = patch(&moved, side, target.class);
        let (before, after, weight, sign) = match which {
            0 => {
                (smape(a.pixels.samples(), a_hat.samples()), smape(moved.pixels.samples(), a_hat.samples()), w.w0, 1.0)
            }
            1 => (smape(&fh, &f.extract(&p.pixels)), smape(&fh, &f.extract(&moved.pixels)), w.w1, 1.0),
            _ => (smape(&fh, &f.extract(&n.pixels)), smape(&fh, &f.extract(&moved.pixels)), w.w2, -1.0),
        };
        let dd = after.unwrap() - before.unwrap();
        if dd.abs() < 1e-9 {
            continue;
        }
        let new = match which {
            0 => loss(&moved, &a_hat, &p, &n, &w, &f),
            1 => loss(&a, &a_hat, &moved, &n, &w, &f),
            _ => loss(&a, &a_hat, &p, &moved, &w, &f),
        }
        .unwrap();
        let dl = new - base;
        if dl.signum() != (sign * dd).signum() || (dl - sign * weight * dd).abs() > 1e-12 {
            mono_bad += 1;
        }
        trials += 1;
    }
    if trials < 100 || mono_bad > 0 {
        failures.push(format!("monotonicity: {mono_bad} violations in {trials} trials"));
    }
    let pass = failures.is_empty();
    let detail = if pass {
        format!("smape properties on 10^4 vectors, toy loss |Δ| {:.1e}, monotonicity 100/100", (got - want).abs())
    } else {
        failures.join("; ")
    };
    Outcome { pass, detail }
}

// ---------------------------------------------------------------------------------------
// AC7: end-to-end determinism through the binary

fn tamperscope(args: &[&str]) {
    let o = Command::new(env!("CARGO_BIN_EXE_tamperscope")).args(args).output().expect("binary runs");
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn pipeline(root: &Path, spec: &Path, jobs: usize, tag: &str) -> Vec<u8> {
    let p = |s: &str| root.join(s).to_str().unwrap().to_owned();
    let (data, pred, report) = (p(&format!("data-{tag}")), p(&format!("pred-{tag}")), p(&format!("report-{tag}.json")));
    let jobs = jobs.to_string();
    tamperscope(&["synth", "--spec", spec.to_str().unwrap(), "--n", "6", "--seed", "77", "--out", &data]);
    let index = format!("{data}/index.csv");
    tamperscope(&["detect", "--algo", "all", "--index", &index, "--out", &pred, "--jobs", &jobs]);
    tamperscope(&["score", "--pred", &pred, "--index", &index, "--out", &report]);
    std::fs::read(&report).unwrap()
}

fn ac7() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let spec = tmp.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"base":"demosaiced_rggb","width":256,"height":256,"host_chain":[{"jpeg":{"quality":85}}],
            "op":{"kind":"splice","donor":"texture"}}"#,
    )
    .unwrap();
    let one = pipeline(tmp.path(), &spec, 1, "j1");
    let eight = pipeline(tmp.path(), &spec, 8, "j8");
    let again = pipeline(tmp.path(), &spec, 8, "j8b");
    let same = one == eight && eight == again;
    Outcome {
        pass: same && !one.is_empty(),
        detail: format!(
            "synth→detect→score, all detectors, jobs 1 vs 8 vs 8: reports {} ({} bytes)",
            if same { "byte-identical" } else { "differ" },
            one.len()
        ),
    }
}

#[test]
fn acceptance() {
    let results = [
        check("AC1", Duration::from_secs(5), ac1),
        check("AC2", Duration::from_secs(10), ac2),
        check("AC3", Duration::from_secs(30), ac3),
        check("AC4", Duration::from_secs(600), ac4),
        check("AC5", Duration::from_secs(300), ac5),
        check("AC6", Duration::from_secs(60), ac6),
        check("AC7", Duration::from_secs(300), ac7),
    ];
    let failed: Vec<String> =
        results.iter().enumerate().filter(|(_, &ok)| !ok).map(|(i, _)| format!("AC{}", i + 1)).collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
}
