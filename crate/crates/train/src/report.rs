//! `report.csv` / `report.json` output and parsing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use abyss_core::tracker::BlockSizeAnalysis;
use abyss_core::MetricsRow;
use serde::{Deserialize, Serialize};

use crate::error::{io, Result};
use crate::eval::CoverageRecord;
use crate::train::write_json;

pub const CSV_FILE: &str = "report.csv";
pub const JSON_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_digest: String,
    /// Metric and loss definitions used for this report.
    pub definitions: BTreeMap<String, String>,
    pub coverage: Vec<CoverageRecord>,
    pub block_size_analysis: Option<BlockSizeAnalysis>,
}

impl ReportMetadata {
    pub fn new(seed: u64, config_digest: String) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_digest,
            definitions: default_definitions(),
            coverage: Vec::new(),
            block_size_analysis: None,
        }
    }
}

pub fn default_definitions() -> BTreeMap<String, String> {
    [
        ("ssim", "Gaussian window 11, sigma 1.5, C1 = 1e-4, C2 = 9e-4, valid region, data range 1"),
        ("psnr_db", "10 log10(1 / mse) per tile on normalized depth; inf for exact tiles"),
        ("mse", "mean squared error on normalized depth, averaged per tile"),
        ("mae", "mean absolute error on normalized depth, averaged per tile"),
        ("uwidth", "mean of upper - lower over pixels, averaged per tile"),
        ("cal_err", "|coverage - nominal| with coverage pooled over the region's pixels; overall row is the tile-weighted mean of region rows"),
        ("nominal_confidence", "0.9 unless overridden in the tracker config"),
        ("calibration_split", "last 10% of each region's training tiles; validation tiles are never used for calibration"),
        ("l_div", "log K - entropy of hard code usage per batch; gradient from softmax assignments with the encoder output held fixed"),
        ("overall", "tile-count-weighted mean of the region rows"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<MetricsRow>,
    pub metadata: ReportMetadata,
}

/// Rows as CSV, `None` fields left empty.
pub fn rows_to_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?)
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    rows_from_csv(&std::fs::read_to_string(path).map_err(io(path))?)
}

pub fn read_report(dir: &Path) -> Result<Report> {
    let path = dir.join(JSON_FILE);
    Ok(serde_json::from_str(&std::fs::read_to_string(&path).map_err(io(&path))?)?)
}

/// Writes `report.csv` and `report.json` into `dir`.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let csv_path = dir.join(CSV_FILE);
    std::fs::write(&csv_path, rows_to_csv(&report.rows)?).map_err(io(&csv_path))?;
    let json_path = dir.join(JSON_FILE);
    write_json(&json_path, &serde_json::to_string_pretty(report)?)?;
    Ok(vec![csv_path, json_path])
}
