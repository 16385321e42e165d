//! BLK: local consistency of the JPEG blocking artifact grid.
//!
//! Absolute second differences respond on both sides of an 8-periodic block boundary. After
//! subtracting a running median (which removes smooth texture but keeps the sparse periodic
//! peaks), the grid phase is the offset whose boundary column pair and row pair carry the most
//! energy. Blocks laid on that phase are then scored by how much of their energy sits off the
//! expected boundary: a pasted or shifted region carries its own grid at another phase.

use crate::error::{Error, Result};
use crate::heatmap::{median, normalize_minmax, upsample_cells, HeatMap};
use crate::raster::Luma;

#[derive(Clone, Copy, Debug)]
pub struct BlkConfig {
    /// Half-width of the running median that suppresses texture.
    pub texture_radius: usize,
    pub min_side: usize,
}

impl Default for BlkConfig {
    fn default() -> Self {
        Self { texture_radius: 4, min_side: 64 }
    }
}

/// Texture-suppressed boundary energies: `(vertical-edge map, horizontal-edge map)`.
fn boundary_energy(img: &Luma, radius: usize) -> (Luma, Luma) {
    let (w, h) = img.dims();
    let dv = Luma::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        (2.0 * img.get_clamped(x, y) - img.get_clamped(x - 1, y) - img.get_clamped(x + 1, y)).abs()
    });
    let dh = Luma::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        (2.0 * img.get_clamped(x, y) - img.get_clamped(x, y - 1) - img.get_clamped(x, y + 1)).abs()
    });
    let r = radius as isize;
    let mut window = Vec::with_capacity(2 * radius + 1);
    let ev = Luma::from_fn(w, h, |x, y| {
        window.clear();
        window.extend((-r..=r).map(|d| dv.get_clamped(x as isize + d, y as isize)));
        (dv.get(x, y) - median(&window)).max(0.0)
    });
    let eh = Luma::from_fn(w, h, |x, y| {
        window.clear();
        window.extend((-r..=r).map(|d| dh.get_clamped(x as isize, y as isize + d)));
        (dh.get(x, y) - median(&window)).max(0.0)
    });
    (ev, eh)
}

/// Offset in `0..8` whose boundary pair `{p, p+1}` carries the most energy.
fn phase(profile: &[f64; 8]) -> usize {
    let mut best = 0;
    let mut best_e = f64::NEG_INFINITY;
    for p in 0..8 {
        let e = profile[p] + profile[(p + 1) % 8];
        if e > best_e {
            best_e = e;
            best = p;
        }
    }
    best
}

/// Global grid phase `(px, py)` of an image.
pub fn grid_phase(img: &Luma) -> (usize, usize) {
    let (ev, eh) = boundary_energy(img, BlkConfig::default().texture_radius);
    phase_from_energy(&ev, &eh)
}

fn phase_from_energy(ev: &Luma, eh: &Luma) -> (usize, usize) {
    let (w, h) = ev.dims();
    let mut col = [0.0; 8];
    let mut row = [0.0; 8];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            col[x % 8] += ev.get(x, y);
            row[y % 8] += eh.get(x, y);
        }
    }
    (phase(&col), phase(&row))
}

pub fn detect_blk(img: &Luma) -> Result<HeatMap> {
    detect_blk_with(img, &BlkConfig::default())
}

pub fn detect_blk_with(img: &Luma, cfg: &BlkConfig) -> Result<HeatMap> {
    let (w, h) = img.dims();
    if w < cfg.min_side || h < cfg.min_side {
        return Err(Error::TooSmall(format!("BLK needs {0}x{0}, got {w}x{h}", cfg.min_side)));
    }
    let (ev, eh) = boundary_energy(img, cfg.texture_radius);
    let (px, py) = phase_from_energy(&ev, &eh);
    let bw = (w - px) / 8;
    let bh = (h - py) / 8;

    let mut raw = Vec::with_capacity(bw * bh);
    for by in 0..bh {
        for bx in 0..bw {
            let (x0, y0) = (px + bx * 8, py + by * 8);
            let (mut on, mut off) = (0.0, 0.0);
            for dy in 0..8 {
                for dx in 0..8 {
                    let (x, y) = (x0 + dx, y0 + dy);
                    let v = ev.get(x, y);
                    if dx < 2 {
                        on += v / 2.0
                    } else {
                        off += v / 6.0
                    }
                    let hz = eh.get(x, y);
                    if dy < 2 {
                        on += hz / 2.0
                    } else {
                        off += hz / 6.0
                    }
                }
            }
            let total = on + off;
            raw.push(if total > 1e-12 { (off - on) / total } else { 0.0 });
        }
    }

    // 3x3 median over blocks.
    let mut smoothed = Vec::with_capacity(raw.len());
    let mut win = Vec::with_capacity(9);
    for by in 0..bh as isize {
        for bx in 0..bw as isize {
            win.clear();
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (x, y) = (bx + dx, by + dy);
                    if x >= 0 && y >= 0 && x < bw as isize && y < bh as isize {
                        win.push(raw[y as usize * bw + x as usize]);
                    }
                }
            }
            smoothed.push(median(&win));
        }
    }

    let cells = normalize_minmax(&smoothed);
    let scores = upsample_cells(&cells, bw, bh, 8, 8, (px, py), w, h);
    HeatMap::new(w, h, scores)
}
