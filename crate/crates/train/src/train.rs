//! Tracker-weighted training and the calibration pass.

use std::path::Path;

use abyss_core::{DepthGrid, TilePair, TrackerState};
use abyss_nn::{checkpoint, total_loss, Adam, Graph, Model, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::{hr_batch, lr_batch, stack, unstack};
use crate::config::TrainConfig;
use crate::error::{io, Result, TrainError};
use crate::threads;

/// Tiles per inference batch. Fixed so predictions do not depend on the
/// number of worker threads.
pub const PREDICT_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub loss: f64,
    pub recon: f64,
    pub ssim: f64,
    pub vq: f64,
    pub div: f64,
    /// Mean loss weight over all blocks seen in the epoch.
    pub mean_weight: f64,
    /// Distinct codebook entries used during the epoch (0 for SRCNN).
    pub codes_used: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub steps: Vec<f64>,
    pub epochs: Vec<EpochStats>,
}

impl LossTrace {
    pub fn first_epoch_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.loss)
    }

    pub fn last_epoch_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model<f32>,
    pub tracker: TrackerState,
    pub trace: LossTrace,
}

pub const MODEL_FILE: &str = "model.json";
pub const TRACKER_FILE: &str = "tracker.json";
pub const TRACE_FILE: &str = "loss_trace.json";

impl Trained {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        checkpoint::save(&self.model, &dir.join(MODEL_FILE))?;
        write_json(&dir.join(TRACKER_FILE), &self.tracker.to_json()?)?;
        write_json(&dir.join(TRACE_FILE), &serde_json::to_string_pretty(&self.trace)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let model = checkpoint::load(&dir.join(MODEL_FILE))?;
        let tracker = load_tracker(&dir.join(TRACKER_FILE))?;
        let path = dir.join(TRACE_FILE);
        let trace = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(_) => LossTrace::default(),
        };
        Ok(Self { model, tracker, trace })
    }
}

pub fn load_tracker(path: &Path) -> Result<TrackerState> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    Ok(TrackerState::from_json(&text)?)
}

pub(crate) fn write_json(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io(path))
}

/// Splits off the last `fraction` of every region's tiles (rounded) for
/// calibration. Returns `(fit, calibration)` in input order.
pub fn split_calibration(pairs: &[TilePair], fraction: f64) -> (Vec<TilePair>, Vec<TilePair>) {
    let mut regions: Vec<&str> = Vec::new();
    for p in pairs {
        if !regions.contains(&p.region.as_str()) {
            regions.push(&p.region);
        }
    }
    let mut fit = Vec::new();
    let mut calib = Vec::new();
    for r in regions {
        let members: Vec<&TilePair> = pairs.iter().filter(|p| p.region == r).collect();
        let n_cal = (members.len() as f64 * fraction).round() as usize;
        let cut = members.len() - n_cal.min(members.len());
        fit.extend(members[..cut].iter().map(|p| (*p).clone()));
        calib.extend(members[cut..].iter().map(|p| (*p).clone()));
    }
    (fit, calib)
}

/// Trains `model` in place on `tiles`, feeding every prediction into `tracker`
/// and weighting the reconstruction loss per block by the clamped scores.
///
/// When `checkpoint_dir` is set, the model, tracker and loss trace are
/// written there after every epoch.
pub fn train(
    mut model: Model<f32>,
    mut tracker: TrackerState,
    tiles: &[TilePair],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<Trained> {
    cfg.validate()?;
    if tiles.is_empty() {
        return Err(TrainError::Config("no training tiles".into()));
    }
    let mut opt = Adam::new(model.params(), cfg.step_size);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    let mut trace = LossTrace::default();
    let (by, bx) = tracker.block_dims();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 6];
        let mut n_weights = 0usize;
        let mut codes = vec![false; model.config().codebook_size];
        let mut steps = 0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&TilePair> = chunk.iter().map(|&i| &tiles[i]).collect();
            let lr = lr_batch(&batch)?;
            let hr = hr_batch(&batch)?;
            let mut g = Graph::new();
            let bound = model.params().bind(&mut g);
            let out = model.forward(&mut g, &bound, &lr)?;
            if !g.value(out.pred).all_finite() {
                return Err(non_finite(epoch, step, &tracker));
            }
            let preds = unstack(g.value(out.pred))?;
            let mut errors = Vec::with_capacity(batch.len());
            for (p, pred) in batch.iter().zip(&preds) {
                let e = tracker.block_errors(&p.hr, pred)?;
                tracker.observe(e.values())?;
                errors.push(e);
            }
            let mut weights = Vec::with_capacity(batch.len() * by * bx);
            for e in &errors {
                weights.extend(tracker.loss_weights(e.values())?);
            }
            sums[5] += weights.iter().sum::<f64>();
            n_weights += weights.len();
            let weights = Tensor::new(&[batch.len(), by, bx], weights.into_iter().map(|w| w as f32).collect())?;
            let (vq, div) = out.quant.as_ref().map_or((None, None), |q| (Some(q.l_vq), Some(q.l_div)));
            if let Some(q) = &out.quant {
                q.indices.iter().for_each(|&i| codes[i] = true);
            }
            let terms = total_loss(&mut g, out.pred, &hr, &weights, vq, div, model.config())?;
            let loss = terms.total_value(&g);
            if !loss.is_finite() {
                return Err(non_finite(epoch, step, &tracker));
            }
            let grads = g.backward(terms.total);
            opt.step(model.params_mut(), &bound.grads(&grads));
            trace.steps.push(loss);
            for (s, v) in sums.iter_mut().zip([loss, terms.recon_value, terms.ssim_value, terms.vq_value, terms.div_value]) {
                *s += v;
            }
            steps += 1;
        }
        let n = steps as f64;
        let stats = EpochStats {
            epoch,
            steps,
            loss: sums[0] / n,
            recon: sums[1] / n,
            ssim: sums[2] / n,
            vq: sums[3] / n,
            div: sums[4] / n,
            mean_weight: sums[5] / n_weights.max(1) as f64,
            codes_used: if model.codebook().is_some() { codes.iter().filter(|c| **c).count() } else { 0 },
        };
        log::info!(
            "epoch {}/{}: loss {:.5} recon {:.3e} ssim {:.4} codes {}",
            epoch + 1,
            cfg.epochs,
            stats.loss,
            stats.recon,
            stats.ssim,
            stats.codes_used
        );
        trace.epochs.push(stats);
        if let Some(dir) = checkpoint_dir {
            Trained { model: model.clone(), tracker: tracker.clone(), trace: trace.clone() }.save(dir)?;
        }
    }
    Ok(Trained { model, tracker, trace })
}

/// Divergence error carrying the tracker's EMA map for diagnosis.
fn non_finite(epoch: usize, step: usize, tracker: &TrackerState) -> TrainError {
    let (blocks_y, blocks_x) = tracker.block_dims();
    TrainError::NonFinite { epoch, step, blocks_y, blocks_x, ema: tracker.ema_grid().into_values() }
}

/// Model predictions for every LR grid, batched in fixed chunks and merged in input order.
pub fn predict_grids(model: &Model<f32>, lrs: &[&DepthGrid]) -> Result<Vec<DepthGrid>> {
    let chunks: Vec<&[&DepthGrid]> = lrs.chunks(PREDICT_CHUNK).collect();
    let parts: Vec<Result<Vec<DepthGrid>>> = threads::pool().install(|| {
        chunks
            .par_iter()
            .map(|c| {
                let x = stack(c.iter().copied())?;
                unstack(&model.predict(&x)?)
            })
            .collect()
    });
    let mut out = Vec::with_capacity(lrs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn predict_tiles(model: &Model<f32>, tiles: &[TilePair]) -> Result<Vec<DepthGrid>> {
    let lrs: Vec<&DepthGrid> = tiles.iter().map(|t| &t.lr).collect();
    predict_grids(model, &lrs)
}

/// Calibrates `tracker` on model predictions for `calib`.
pub fn run_calibration(model: &Model<f32>, tracker: &mut TrackerState, calib: &[TilePair]) -> Result<()> {
    let preds = predict_tiles(model, calib)?;
    tracker.calibrate(calib.iter().map(|t| &t.hr).zip(&preds))?;
    Ok(())
}
