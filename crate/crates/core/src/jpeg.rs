//! Baseline JPEG encode/decode round trips.

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Annex K luminance quantization table, natural order.
pub const STD_LUMA_QTABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

fn check_quality(quality: u8) -> Result<()> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidArgument(format!("JPEG quality {quality} outside 1..=100")));
    }
    Ok(())
}

/// Luminance table scaled by the IJG quality formula, natural order.
pub fn scaled_luma_table(quality: u8) -> Result<[u16; 64]> {
    check_quality(quality)?;
    let q = u32::from(quality);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0u16; 64];
    for (o, &v) in out.iter_mut().zip(STD_LUMA_QTABLE.iter()) {
        *o = ((u32::from(v) * scale + 50) / 100).clamp(1, 255) as u16;
    }
    Ok(out)
}

/// Encodes the raster (rounded to 8 bits) as a baseline JPEG.
pub fn encode_jpeg(img: &Raster, quality: u8) -> Result<Vec<u8>> {
    check_quality(quality)?;
    let mut out = Cursor::new(Vec::new());
    let enc = JpegEncoder::new_with_quality(&mut out, quality);
    img.to_dynamic().write_with_encoder(enc)?;
    Ok(out.into_inner())
}

/// Encode at `quality`, then decode; dimensions and channel count are preserved.
pub fn jpeg_roundtrip(img: &Raster, quality: u8) -> Result<Raster> {
    let bytes = encode_jpeg(img, quality)?;
    let back = Raster::decode(&bytes)?;
    if back.dims() != img.dims() || back.channels() != img.channels() {
        return Err(Error::UnsupportedFormat("JPEG round trip changed the image shape".into()));
    }
    Ok(back)
}
