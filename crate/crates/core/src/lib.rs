//! Learning-free image forgery localization.
//!
//! Eight detectors turn an image into a [`HeatMap`]; the [`scoring`] module grades heatmaps
//! against ground-truth masks (grayscale weighted L1 and ROC AUC with a no-score band), and
//! [`synth`] produces seeded forgeries with exact masks for self-contained evaluation.

pub mod aen;
pub mod dct;
pub mod detectors;
pub mod error;
pub mod filter;
pub mod heatmap;
pub mod jpeg;
pub mod mask;
pub mod raster;
pub mod scoring;
pub mod synth;
pub mod wavelet;

pub use error::{Error, Result};
pub use heatmap::HeatMap;
pub use mask::GtMask;
pub use raster::{to_luma, Luma, Raster};
