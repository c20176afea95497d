//! End-to-end runs shared by the CLI and the acceptance suite.

use std::path::Path;

use abyss_core::tracker::{analyze_block_size, estimate_lambda, BlockSizeAnalysis};
use abyss_core::{build_manifest, Dataset, TrackerState};
use abyss_nn::{Model, ModelKind};

use crate::config::{ExperimentConfig, Method};
use crate::error::{Result, TrainError};
use crate::eval::{evaluate, Predictor};
use crate::report::{Report, ReportMetadata};
use crate::train::{run_calibration, split_calibration, train, Trained};

/// Generates the synthetic dataset for `cfg` (in meters).
pub fn synthesize(cfg: &ExperimentConfig) -> Result<Dataset> {
    Ok(build_manifest(&cfg.data)?)
}

pub fn region_names(ds: &Dataset) -> Vec<String> {
    ds.manifest.regions.iter().map(|r| r.name.clone()).collect()
}

pub fn new_tracker(cfg: &ExperimentConfig, ds: &Dataset) -> Result<TrackerState> {
    let side = ds.manifest.tile_size;
    Ok(TrackerState::new(cfg.train.tracker.clone(), side, side)?)
}

/// Trains a model of `kind` on the fit part of the (normalized) training
/// split, then calibrates its tracker on the held-out part.
pub fn train_and_calibrate(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    kind: ModelKind,
    checkpoint_dir: Option<&Path>,
) -> Result<Trained> {
    let (fit, calib) = split_calibration(&ds.train, cfg.train.calibration_fraction);
    let mut train_cfg = cfg.train.clone();
    train_cfg.model = cfg.model_for(kind);
    let model = Model::new(train_cfg.model.clone())?;
    let mut trained = train(model, new_tracker(cfg, ds)?, &fit, &train_cfg, checkpoint_dir)?;
    run_calibration(&trained.model, &mut trained.tracker, &calib)?;
    if let Some(dir) = checkpoint_dir {
        trained.save(dir)?;
    }
    Ok(trained)
}

/// Noise variance and gradient scale of the normalized validation tiles, fed
/// to the block-size analysis.
pub fn block_size_analysis(ds: &Dataset, raw_noise_sigma: f64) -> Result<BlockSizeAnalysis> {
    let n = &ds.manifest.normalization;
    let meters_to_unit = 1.0 / (n.std * (n.z_max - n.z_min));
    let sigma2 = (raw_noise_sigma * meters_to_unit).powi(2);
    let tiles = if ds.val.is_empty() { &ds.train } else { &ds.val };
    let mut lambda = 0.0;
    for t in tiles {
        lambda += estimate_lambda(&t.hr, 1.0)?;
    }
    lambda /= tiles.len() as f64;
    let side = ds.manifest.tile_size as f64;
    let candidates: Vec<f64> = (1..=10_000).map(|i| side * i as f64 / 10_000.0).collect();
    Ok(analyze_block_size(sigma2, lambda, &candidates)?)
}

/// Evaluates every configured method on the validation split. Model methods
/// need an entry in `trained`.
pub fn evaluate_methods(ds: &Dataset, cfg: &ExperimentConfig, trained: &[(ModelKind, &Trained)]) -> Result<Report> {
    let regions = region_names(ds);
    let mut meta = ReportMetadata::new(cfg.seed, cfg.digest());
    let mut rows = Vec::new();
    for &method in &cfg.eval.methods {
        let out = match (method.interp(), method.model_kind()) {
            (Some(interp), _) => evaluate(&Predictor::Interp(interp), &ds.val, method.name(), None, &regions)?,
            (None, Some(kind)) => {
                let t = trained
                    .iter()
                    .find(|(k, _)| *k == kind)
                    .map(|(_, t)| *t)
                    .ok_or_else(|| TrainError::Config(format!("no trained model for {method}")))?;
                evaluate(&Predictor::Model(&t.model), &ds.val, method.name(), Some(&t.tracker), &regions)?
            }
            (None, None) => unreachable!("every method is an interpolation or a model"),
        };
        rows.extend(out.rows);
        meta.coverage.extend(out.coverage);
    }
    let noise = mean_noise_sigma(cfg);
    meta.block_size_analysis = Some(block_size_analysis(ds, noise)?);
    Ok(Report { rows, metadata: meta })
}

fn mean_noise_sigma(cfg: &ExperimentConfig) -> f64 {
    let r = &cfg.data.regions;
    r.iter().map(|r| r.profile.noise_sigma).sum::<f64>() / r.len().max(1) as f64
}

/// Synthesizes data, trains every requested model, and evaluates all methods.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Report, Vec<(ModelKind, Trained)>)> {
    let ds = synthesize(cfg)?.normalized()?;
    let mut trained = Vec::new();
    for m in &cfg.eval.methods {
        if let Some(kind) = m.model_kind() {
            trained.push((kind, train_and_calibrate(&ds, cfg, kind, None)?));
        }
    }
    let refs: Vec<(ModelKind, &Trained)> = trained.iter().map(|(k, t)| (*k, t)).collect();
    let report = evaluate_methods(&ds, cfg, &refs)?;
    Ok((report, trained))
}

/// The methods in `cfg` that need a trained model.
pub fn model_methods(cfg: &ExperimentConfig) -> Vec<Method> {
    cfg.eval.methods.iter().copied().filter(|m| m.model_kind().is_some()).collect()
}
