//! Score report document and its JSON schema.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tamperscope_core::scoring::{AggregateRow, ScoreRow};

pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Rounds to 6 significant digits.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Fraction to a percentage with 2 decimals.
pub fn percent2(x: f64) -> f64 {
    sig6((x * 100.0 * 100.0).round() / 100.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportParams {
    pub detectors: Vec<String>,
    pub kernel: usize,
    pub pristine: bool,
    pub index_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerImage {
    pub id: String,
    pub detector: String,
    /// Percent.
    pub gwl1: f64,
    /// Percent.
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Aggregate {
    pub detector: String,
    pub gwl1_mean: f64,
    pub gwl1_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub id: String,
    pub detector: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub run_id: String,
    pub params: ReportParams,
    pub per_image: Vec<PerImage>,
    pub aggregate: Vec<Aggregate>,
    pub errors: Vec<RowError>,
}

impl Report {
    /// Builds the document from fractional scores; rows are sorted by (id, detector).
    pub fn build(
        params: ReportParams,
        mut rows: Vec<ScoreRow>,
        aggregate: Vec<AggregateRow>,
        errors: Vec<RowError>,
    ) -> Self {
        rows.sort_by(|a, b| (&a.id, &a.detector).cmp(&(&b.id, &b.detector)));
        let run_id = sha256_hex(&serde_json::to_vec(&params).expect("params serialize"));
        Report {
            run_id,
            params,
            per_image: rows
                .into_iter()
                .map(|r| PerImage {
                    id: r.id,
                    detector: r.detector,
                    gwl1: sig6(r.gwl1 * 100.0),
                    auc: sig6(r.auc * 100.0),
                })
                .collect(),
            aggregate: aggregate
                .into_iter()
                .map(|a| Aggregate {
                    detector: a.detector,
                    gwl1_mean: percent2(a.gwl1_mean),
                    gwl1_std: percent2(a.gwl1_std),
                    auc_mean: percent2(a.auc_mean),
                    auc_std: percent2(a.auc_std),
                    count: a.count,
                })
                .collect(),
            errors,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("report serializes");
        v.push(b'\n');
        v
    }
}
