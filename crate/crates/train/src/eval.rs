//! Per-tile metrics and their region/overall aggregation.

use abyss_core::metrics::{calibration_error, coverage_counts, mae, mse, psnr, ssim};
use abyss_core::{upsample, DepthGrid, InterpMethod, MetricsRow, TilePair, TrackerState};
use abyss_nn::Model;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::threads;
use crate::train::predict_tiles;

pub const OVERALL: &str = "overall";

pub enum Predictor<'a> {
    Interp(InterpMethod),
    Model(&'a Model<f32>),
}

impl Predictor<'_> {
    pub fn predict(&self, tiles: &[TilePair]) -> Result<Vec<DepthGrid>> {
        match self {
            Predictor::Interp(m) => threads::pool().install(|| {
                tiles.par_iter().map(|t| Ok(upsample(&t.lr, t.scale, *m)?)).collect()
            }),
            Predictor::Model(model) => predict_tiles(model, tiles),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileMetrics {
    pub region: String,
    pub ssim: f64,
    pub psnr_db: f64,
    pub mse: f64,
    pub mae: f64,
    pub uwidth: Option<f64>,
    /// Pixels inside the bounds and pixels total.
    pub covered: Option<(usize, usize)>,
}

pub fn tile_metrics(tile: &TilePair, pred: &DepthGrid, tracker: Option<&TrackerState>) -> Result<TileMetrics> {
    let truth = &tile.hr;
    let (uwidth, covered) = match tracker {
        Some(t) => {
            let b = t.bounds(pred)?;
            (Some(b.width_map().mean()), Some(coverage_counts(truth, &b)?))
        }
        None => (None, None),
    };
    Ok(TileMetrics {
        region: tile.region.clone(),
        ssim: ssim(truth, pred)?,
        psnr_db: psnr(truth, pred, 1.0)?,
        mse: mse(truth, pred)?,
        mae: mae(truth, pred)?,
        uwidth,
        covered,
    })
}

/// Interval coverage pooled over a region's pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub region: String,
    pub method: String,
    pub block_size: usize,
    pub covered: usize,
    pub total: usize,
    /// Block-level observations behind the figure (tiles times blocks per tile).
    pub block_observations: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub rows: Vec<MetricsRow>,
    pub coverage: Vec<CoverageRecord>,
    pub tiles: Vec<TileMetrics>,
}

/// Evaluates precomputed predictions. Rows come per region in first-seen
/// order, regions listed in `expected` but absent are skipped with a warning,
/// and an overall row closes the list.
pub fn evaluate_predictions(
    tiles: &[TilePair],
    preds: &[DepthGrid],
    method: &str,
    tracker: Option<&TrackerState>,
    expected: &[String],
) -> Result<EvalOutput> {
    assert_eq!(tiles.len(), preds.len(), "one prediction per tile");
    let metrics: Vec<Result<TileMetrics>> = threads::pool().install(|| {
        tiles.par_iter().zip(preds.par_iter()).map(|(t, p)| tile_metrics(t, p, tracker)).collect()
    });
    let metrics = metrics.into_iter().collect::<Result<Vec<_>>>()?;
    let mut regions: Vec<String> = Vec::new();
    for m in &metrics {
        if !regions.contains(&m.region) {
            regions.push(m.region.clone());
        }
    }
    for r in expected {
        if !regions.contains(r) {
            log::warn!("region {r:?} has no tiles; skipped");
        }
    }
    let block_size = tracker.map(|t| t.config().block_size);
    let nominal = tracker.map(|t| t.config().nominal_confidence);
    let blocks_per_tile = tracker.map_or(0, |t| t.blocks().len());
    let mut rows = Vec::new();
    let mut coverage = Vec::new();
    for r in &regions {
        let members: Vec<&TileMetrics> = metrics.iter().filter(|m| &m.region == r).collect();
        let n = members.len() as f64;
        let mean = |f: &dyn Fn(&TileMetrics) -> f64| members.iter().map(|m| f(m)).sum::<f64>() / n;
        let mut row = MetricsRow {
            region: r.clone(),
            method: method.to_string(),
            block_size,
            ssim: mean(&|m| m.ssim),
            psnr_db: mean(&|m| m.psnr_db),
            mse: mean(&|m| m.mse),
            mae: mean(&|m| m.mae),
            uwidth: None,
            cal_err: None,
            n_tiles: members.len(),
        };
        if let (Some(k), Some(nominal)) = (block_size, nominal) {
            let (hit, tot) = members
                .iter()
                .filter_map(|m| m.covered)
                .fold((0, 0), |(a, b), (h, t)| (a + h, b + t));
            let cov = hit as f64 / tot as f64;
            row.uwidth = Some(mean(&|m| m.uwidth.unwrap_or(0.0)));
            row.cal_err = Some(calibration_error(cov, nominal));
            coverage.push(CoverageRecord {
                region: r.clone(),
                method: method.to_string(),
                block_size: k,
                covered: hit,
                total: tot,
                block_observations: members.len() * blocks_per_tile,
                coverage: cov,
            });
        }
        rows.push(row);
    }
    if !rows.is_empty() {
        rows.push(overall_row(&rows));
        if let (Some(k), Some(_)) = (block_size, nominal) {
            let (hit, tot, obs) = coverage.iter().fold((0, 0, 0), |a, c| (a.0 + c.covered, a.1 + c.total, a.2 + c.block_observations));
            coverage.push(CoverageRecord {
                region: OVERALL.into(),
                method: method.to_string(),
                block_size: k,
                covered: hit,
                total: tot,
                block_observations: obs,
                coverage: hit as f64 / tot as f64,
            });
        }
    }
    Ok(EvalOutput { rows, coverage, tiles: metrics })
}

pub fn evaluate(
    predictor: &Predictor<'_>,
    tiles: &[TilePair],
    method: &str,
    tracker: Option<&TrackerState>,
    expected: &[String],
) -> Result<EvalOutput> {
    let preds = predictor.predict(tiles)?;
    evaluate_predictions(tiles, &preds, method, tracker, expected)
}

/// Tile-count-weighted mean of region rows, for every column.
pub fn overall_row(regions: &[MetricsRow]) -> MetricsRow {
    let n: usize = regions.iter().map(|r| r.n_tiles).sum();
    let w = |f: &dyn Fn(&MetricsRow) -> f64| regions.iter().map(|r| f(r) * r.n_tiles as f64).sum::<f64>() / n as f64;
    let has_u = regions.iter().all(|r| r.uwidth.is_some() && r.cal_err.is_some());
    MetricsRow {
        region: OVERALL.into(),
        method: regions[0].method.clone(),
        block_size: regions[0].block_size,
        ssim: w(&|r| r.ssim),
        psnr_db: w(&|r| r.psnr_db),
        mse: w(&|r| r.mse),
        mae: w(&|r| r.mae),
        uwidth: has_u.then(|| w(&|r| r.uwidth.unwrap())),
        cal_err: has_u.then(|| w(&|r| r.cal_err.unwrap())),
        n_tiles: n,
    }
}
