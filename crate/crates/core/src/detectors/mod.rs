//! The eight forgery detectors and a uniform entry point over them.

pub mod blk;
pub mod cfa;
pub mod dct;
pub mod ela;
pub mod gmm;
pub mod noise;
pub mod qtable;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::HeatMap;
use crate::raster::{to_luma, Raster};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Blk,
    Dct,
    Ela,
    Cfa1,
    Cfa2,
    Noi1,
    Noi2,
    Noi4,
}

impl Detector {
    pub const ALL: [Detector; 8] = [
        Detector::Blk,
        Detector::Dct,
        Detector::Ela,
        Detector::Cfa1,
        Detector::Cfa2,
        Detector::Noi1,
        Detector::Noi2,
        Detector::Noi4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Detector::Blk => "blk",
            Detector::Dct => "dct",
            Detector::Ela => "ela",
            Detector::Cfa1 => "cfa1",
            Detector::Cfa2 => "cfa2",
            Detector::Noi1 => "noi1",
            Detector::Noi2 => "noi2",
            Detector::Noi4 => "noi4",
        }
    }

    /// Runs the detector with default parameters. The heatmap always matches the image size.
    pub fn run(self, img: &Raster) -> Result<HeatMap> {
        match self {
            Detector::Ela => ela::detect_ela(img, ela::DEFAULT_ELA_QUALITY),
            Detector::Cfa1 => cfa::detect_cfa1(img),
            Detector::Cfa2 => cfa::detect_cfa2(img),
            _ => {
                let luma = to_luma(img)?;
                match self {
                    Detector::Blk => blk::detect_blk(&luma),
                    Detector::Dct => dct::detect_dct(&luma),
                    Detector::Noi1 => noise::detect_noi1(&luma, noise::DEFAULT_NOI1_BLOCK),
                    Detector::Noi2 => noise::detect_noi2(&luma),
                    _ => noise::detect_noi4(&luma),
                }
            }
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Detector::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown detector '{s}'")))
    }
}
