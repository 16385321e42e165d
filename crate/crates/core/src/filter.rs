//! Neighbourhood filters with edge replication at the borders.

use crate::error::{Error, Result};
use crate::raster::Luma;

/// k×k median filter. `k` must be odd and at least 3.
pub fn median_filter(img: &Luma, k: usize) -> Result<Luma> {
    if k < 3 || k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("median window {k} must be odd and >= 3")));
    }
    let r = (k / 2) as isize;
    let (w, h) = img.dims();
    let mut window = Vec::with_capacity(k * k);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            window.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    window.push(img.get_clamped(x + dx, y + dy));
                }
            }
            let mid = window.len() / 2;
            let (_, m, _) = window.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
            out.push(*m);
        }
    }
    Luma::new(w, h, out)
}

/// Normalized Gaussian taps truncated at ⌈3σ⌉.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut taps: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable convolution with a symmetric odd-length kernel.
pub fn convolve_separable(img: &Luma, taps: &[f64]) -> Luma {
    let r = (taps.len() / 2) as isize;
    let (w, h) = img.dims();
    let mut tmp = Luma::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, t) in taps.iter().enumerate() {
                s += t * img.get_clamped(x as isize + i as isize - r, y as isize);
            }
            tmp.set(x, y, s);
        }
    }
    let mut out = Luma::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, t) in taps.iter().enumerate() {
                s += t * tmp.get_clamped(x as isize, y as isize + i as isize - r);
            }
            out.set(x, y, s);
        }
    }
    out
}

pub fn gaussian_blur(img: &Luma, sigma: f64) -> Result<Luma> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("blur sigma {sigma} must be positive")));
    }
    Ok(convolve_separable(img, &gaussian_kernel(sigma)))
}
