//! One-level orthonormal 2D Haar transform.

use crate::error::{Error, Result};
use crate::raster::Luma;

/// The four half-resolution subbands of one Haar level.
#[derive(Clone, Debug)]
pub struct HaarLevel {
    pub ll: Luma,
    /// Horizontal low-pass, vertical high-pass.
    pub lh: Luma,
    pub hl: Luma,
    pub hh: Luma,
}

/// Splits `img` into subbands; an odd trailing row/column is dropped.
pub fn haar2d(img: &Luma) -> Result<HaarLevel> {
    let (w, h) = (img.width() / 2, img.height() / 2);
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument(format!(
            "Haar transform needs at least 2x2, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let mut ll = Vec::with_capacity(w * h);
    let mut lh = Vec::with_capacity(w * h);
    let mut hl = Vec::with_capacity(w * h);
    let mut hh = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let a = img.get(2 * x, 2 * y);
            let b = img.get(2 * x + 1, 2 * y);
            let c = img.get(2 * x, 2 * y + 1);
            let d = img.get(2 * x + 1, 2 * y + 1);
            ll.push((a + b + c + d) / 2.0);
            lh.push((a + b - c - d) / 2.0);
            hl.push((a - b + c - d) / 2.0);
            hh.push((a - b - c + d) / 2.0);
        }
    }
    Ok(HaarLevel {
        ll: Luma::new(w, h, ll)?,
        lh: Luma::new(w, h, lh)?,
        hl: Luma::new(w, h, hl)?,
        hh: Luma::new(w, h, hh)?,
    })
}

/// Diagonal (HH) subband of one Haar level.
pub fn haar_hh(img: &Luma) -> Result<Luma> {
    Ok(haar2d(img)?.hh)
}
