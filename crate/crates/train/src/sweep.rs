//! Uncertainty metrics as a function of tracker block size.

use abyss_core::{DepthGrid, MetricsRow, TrackerConfig, TrackerState};
use abyss_nn::ModelKind;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Result, TrainError};
use crate::eval::{evaluate, evaluate_predictions, CoverageRecord, Predictor, OVERALL};
use crate::pipeline::{region_names, train_and_calibrate};
use crate::train::{predict_tiles, split_calibration, Trained};
use abyss_core::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub block_size: usize,
    pub rows: Vec<MetricsRow>,
    pub coverage: Vec<CoverageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub method: String,
    pub retrained: bool,
    pub entries: Vec<SweepEntry>,
}

impl SweepOutcome {
    /// The overall row for each block size, in sweep order.
    pub fn overall_rows(&self) -> Vec<&MetricsRow> {
        self.entries.iter().filter_map(|e| e.rows.iter().find(|r| r.region == OVERALL)).collect()
    }

    /// `(k, overall uwidth)` pairs.
    pub fn uwidths(&self) -> Vec<(usize, f64)> {
        self.entries
            .iter()
            .zip(self.overall_rows())
            .map(|(e, r)| (e.block_size, r.uwidth.unwrap_or(f64::NAN)))
            .collect()
    }

    pub fn all_rows(&self) -> Vec<MetricsRow> {
        self.entries.iter().flat_map(|e| e.rows.iter().cloned()).collect()
    }
}

fn tracker_for(base: &TrackerConfig, k: usize, side: usize) -> Result<TrackerState> {
    if side % k != 0 {
        return Err(TrainError::Config(format!("block size {k} does not divide the tile side {side}")));
    }
    if k == side {
        log::warn!("block size {k} equals the tile side: one block per tile");
    }
    Ok(TrackerState::new(TrackerConfig { block_size: k, ..base.clone() }, side, side)?)
}

/// One tracker per block size in `cfg.sweep.block_sizes`.
///
/// By default all trackers share one model (`shared`, or a model trained
/// with the base config). Each tracker is fed the model's errors on the fit
/// tiles, calibrated on the held-out tiles, and evaluated on validation.
/// With `cfg.sweep.retrain` every block size trains its own model instead.
pub fn block_size_sweep(ds: &Dataset, cfg: &ExperimentConfig, kind: ModelKind, shared: Option<&Trained>) -> Result<SweepOutcome> {
    let side = ds.manifest.tile_size;
    let regions = region_names(ds);
    let mut entries = Vec::new();
    if cfg.sweep.retrain {
        for &k in &cfg.sweep.block_sizes {
            tracker_for(&cfg.train.tracker, k, side)?;
            let mut cfg_k = cfg.clone();
            cfg_k.train.tracker.block_size = k;
            let t = train_and_calibrate(ds, &cfg_k, kind, None)?;
            let out = evaluate(&Predictor::Model(&t.model), &ds.val, kind.name(), Some(&t.tracker), &regions)?;
            entries.push(SweepEntry { block_size: k, rows: out.rows, coverage: out.coverage });
        }
        return Ok(SweepOutcome { method: kind.name().into(), retrained: true, entries });
    }
    let owned;
    let model = match shared {
        Some(t) => &t.model,
        None => {
            owned = train_and_calibrate(ds, cfg, kind, None)?;
            &owned.model
        }
    };
    let (fit, calib) = split_calibration(&ds.train, cfg.train.calibration_fraction);
    let fit_preds = predict_tiles(model, &fit)?;
    let calib_preds = predict_tiles(model, &calib)?;
    let val_preds = predict_tiles(model, &ds.val)?;
    for &k in &cfg.sweep.block_sizes {
        let mut tracker = tracker_for(&cfg.train.tracker, k, side)?;
        for (t, p) in fit.iter().zip(&fit_preds) {
            tracker.update(&t.hr, p)?;
        }
        tracker.calibrate(calib.iter().map(|t| &t.hr).zip(calib_preds.iter()))?;
        let out = evaluate_predictions(&ds.val, &val_preds, kind.name(), Some(&tracker), &regions)?;
        entries.push(SweepEntry { block_size: k, rows: out.rows, coverage: out.coverage });
    }
    Ok(SweepOutcome { method: kind.name().into(), retrained: false, entries })
}

/// Per-pixel width map of a calibrated tracker, for heatmaps.
pub fn width_map(tracker: &TrackerState, like: &DepthGrid) -> Result<DepthGrid> {
    Ok(tracker.bounds(like)?.width_map())
}
