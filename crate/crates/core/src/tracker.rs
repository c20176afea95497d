//! Per-block error tracking: EMA smoothing, normalized uncertainty scores,
//! quantile calibration of interval half-widths and prediction bounds.
//!
//! Blocks are spatial positions within the high-resolution tile. Statistics
//! pool every sample and step that passes through the tracker.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BlockPartition, DepthGrid};
use crate::metrics::Bounds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub block_size: usize,
    /// EMA decay; weight kept on the previous estimate.
    pub decay: f64,
    pub epsilon: f64,
    /// Quantile of the block history used to normalize scores.
    pub score_quantile: f64,
    pub nominal_confidence: f64,
    pub buffer_capacity: usize,
    pub min_history: usize,
    pub weight_clamp: (f64, f64),
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            block_size: 4,
            decay: 0.99,
            epsilon: 1e-8,
            score_quantile: 0.9,
            nominal_confidence: 0.9,
            buffer_capacity: 1024,
            min_history: 32,
            weight_clamp: (0.1, 10.0),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        let (lo, hi) = self.weight_clamp;
        let problem = if self.block_size == 0 {
            "block_size must be positive"
        } else if !unit(self.decay) {
            "decay must lie in (0, 1)"
        } else if !(self.epsilon > 0.0) {
            "epsilon must be positive"
        } else if !unit(self.score_quantile) {
            "score_quantile must lie in (0, 1)"
        } else if !unit(self.nominal_confidence) {
            "nominal_confidence must lie in (0, 1)"
        } else if self.buffer_capacity == 0 {
            "buffer_capacity must be positive"
        } else if !(lo <= 1.0 && 1.0 <= hi && lo >= 0.0) {
            "weight_clamp must satisfy 0 <= u_min <= 1 <= u_max"
        } else {
            return Ok(());
        };
        Err(Error::Config(problem.into()))
    }
}

fn rank_index(n: usize, q: f64) -> usize {
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    rank.min(n) - 1
}

/// Nearest-rank quantile: the `ceil(q n)`-th smallest value (1-based) of a
/// sorted slice.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    sorted[rank_index(sorted.len(), q)]
}

/// Nearest-rank quantile of unsorted values (linear-time selection).
pub fn quantile_of(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    let i = rank_index(v.len(), q);
    *v.select_nth_unstable_by(i, f64::total_cmp).1
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockState {
    pub ema: f64,
    pub sample_count: u64,
    history: VecDeque<f64>,
    pub calibrated_half_width: Option<f64>,
    /// Running mean of observed block errors.
    pub mean: f64,
    m2: f64,
}

impl BlockState {
    fn observe(&mut self, err: f64, decay: f64, capacity: usize) {
        if self.sample_count == 0 {
            self.ema = err;
        } else {
            self.ema = decay * self.ema + (1.0 - decay) * err;
        }
        self.sample_count += 1;
        let delta = err - self.mean;
        self.mean += delta / self.sample_count as f64;
        self.m2 += delta * (err - self.mean);
        if self.history.len() == capacity {
            self.history.pop_front();
        }
        self.history.push_back(err);
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    /// Population standard deviation of all observed block errors.
    pub fn std(&self) -> f64 {
        if self.sample_count == 0 {
            0.0
        } else {
            (self.m2 / self.sample_count as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    config: TrackerConfig,
    partition: BlockPartition,
    blocks: Vec<BlockState>,
}

impl TrackerState {
    pub fn new(config: TrackerConfig, tile_height: usize, tile_width: usize) -> Result<Self> {
        config.validate()?;
        let partition = BlockPartition::new(tile_height, tile_width, config.block_size)?;
        let blocks = vec![BlockState::default(); partition.n_blocks];
        Ok(Self { config, partition, blocks })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn blocks(&self) -> &[BlockState] {
        &self.blocks
    }

    /// `(blocks_y, blocks_x)`.
    pub fn block_dims(&self) -> (usize, usize) {
        (self.partition.blocks_y(), self.partition.blocks_x())
    }

    pub fn block(&self, by: usize, bx: usize) -> &BlockState {
        &self.blocks[by * self.partition.blocks_x() + bx]
    }

    pub fn is_calibrated(&self) -> bool {
        self.blocks.iter().all(|b| b.calibrated_half_width.is_some())
    }

    fn block_grid(&self, values: Vec<f64>) -> DepthGrid {
        let (by, bx) = self.block_dims();
        DepthGrid::new(by, bx, values).expect("finite block values")
    }

    /// Mean absolute error per block, without touching state.
    pub fn block_errors(&self, truth: &DepthGrid, pred: &DepthGrid) -> Result<DepthGrid> {
        truth.ensure_same_dims(pred, "tracker")?;
        self.partition.check_grid(truth)?;
        let abs: Vec<f64> =
            truth.values().iter().zip(pred.values()).map(|(a, b)| (a - b).abs()).collect();
        Ok(self.block_grid(self.partition.block_means(&abs)))
    }

    /// Folds one (truth, prediction) pair into every block and returns the
    /// block errors that were observed.
    pub fn update(&mut self, truth: &DepthGrid, pred: &DepthGrid) -> Result<DepthGrid> {
        let errs = self.block_errors(truth, pred)?;
        self.observe(errs.values())?;
        Ok(errs)
    }

    /// Folds precomputed block errors (row-major, one per block).
    pub fn observe(&mut self, block_errors: &[f64]) -> Result<()> {
        if block_errors.len() != self.blocks.len() {
            return Err(Error::Shape(format!(
                "{} block errors for {} blocks",
                block_errors.len(),
                self.blocks.len()
            )));
        }
        if let Some(e) = block_errors.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::InvalidData(format!("block error {e}")));
        }
        let (decay, cap) = (self.config.decay, self.config.buffer_capacity);
        for (b, &e) in self.blocks.iter_mut().zip(block_errors) {
            b.observe(e, decay, cap);
        }
        Ok(())
    }

    /// Historical normalizer per block: the score quantile of the history, or
    /// the EMA while the history is shorter than `min_history`.
    pub fn normalizers(&self) -> Result<Vec<f64>> {
        if self.blocks.iter().any(|b| b.sample_count == 0) {
            return Err(Error::State("tracker has not been updated".into()));
        }
        Ok(self
            .blocks
            .iter()
            .map(|b| {
                if b.history.len() < self.config.min_history {
                    b.ema
                } else {
                    let v: Vec<f64> = b.history().collect();
                    quantile_of(&v, self.config.score_quantile)
                }
            })
            .collect())
    }

    /// Scores for precomputed block errors, before clamping.
    pub fn scores_for(&self, block_errors: &[f64]) -> Result<Vec<f64>> {
        let q = self.normalizers()?;
        if block_errors.len() != q.len() {
            return Err(Error::Shape("block error count does not match tracker".into()));
        }
        Ok(block_errors.iter().zip(q).map(|(e, q)| e / (q + self.config.epsilon)).collect())
    }

    /// Unclamped uncertainty scores `block_error / (Q + eps)` per block.
    pub fn uncertainty_scores(&self, truth: &DepthGrid, pred: &DepthGrid) -> Result<DepthGrid> {
        let errs = self.block_errors(truth, pred)?;
        Ok(self.block_grid(self.scores_for(errs.values())?))
    }

    pub fn clamp_weight(&self, u: f64) -> f64 {
        let (lo, hi) = self.config.weight_clamp;
        u.clamp(lo, hi)
    }

    /// Scores clamped into the loss-weight range.
    pub fn loss_weights(&self, block_errors: &[f64]) -> Result<Vec<f64>> {
        Ok(self.scores_for(block_errors)?.into_iter().map(|u| self.clamp_weight(u)).collect())
    }

    /// Sets each block's half-width to the nominal-confidence quantile of the
    /// absolute pixel errors pooled over all calibration pairs. EMA and
    /// history are left unchanged.
    pub fn calibrate<'a, I>(&mut self, pairs: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a DepthGrid, &'a DepthGrid)>,
    {
        let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); self.blocks.len()];
        for (truth, pred) in pairs {
            truth.ensure_same_dims(pred, "calibration")?;
            self.partition.check_grid(truth)?;
            let w = truth.width();
            for (i, pool) in pooled.iter_mut().enumerate() {
                for (y, x) in self.partition.pixels(i) {
                    pool.push((truth.values()[y * w + x] - pred.values()[y * w + x]).abs());
                }
            }
        }
        let bx = self.partition.blocks_x();
        let deficient: Vec<(usize, usize)> = pooled
            .iter()
            .enumerate()
            .filter(|(_, p)| p.len() < self.config.min_history.max(1))
            .map(|(i, _)| (i / bx, i % bx))
            .collect();
        if !deficient.is_empty() {
            return Err(Error::Calibration { blocks: deficient });
        }
        let q = self.config.nominal_confidence;
        for (b, pool) in self.blocks.iter_mut().zip(pooled) {
            b.calibrated_half_width = Some(quantile_of(&pool, q));
        }
        Ok(())
    }

    pub fn half_widths(&self) -> Result<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| b.calibrated_half_width)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::State("tracker is not calibrated".into()))
    }

    /// Piecewise-constant interval `pred ± half_width(block)`.
    pub fn bounds(&self, pred: &DepthGrid) -> Result<Bounds> {
        let hw = self.half_widths()?;
        self.partition.check_grid(pred)?;
        let per_pixel = self.partition.broadcast(&hw);
        let (h, w) = pred.dims();
        let lower = pred.values().iter().zip(&per_pixel).map(|(p, r)| p - r).collect();
        let upper = pred.values().iter().zip(&per_pixel).map(|(p, r)| p + r).collect();
        Bounds::new(DepthGrid::new(h, w, lower)?, DepthGrid::new(h, w, upper)?)
    }

    /// Interval width `2 * half_width` per block.
    pub fn width_grid(&self) -> Result<DepthGrid> {
        Ok(self.block_grid(self.half_widths()?.into_iter().map(|h| 2.0 * h).collect()))
    }

    pub fn ema_grid(&self) -> DepthGrid {
        self.block_grid(self.blocks.iter().map(|b| b.ema).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TrackerSnapshot::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<TrackerSnapshot>(s)?.try_into()
    }
}

/// Serialized tracker: configuration plus per-block summaries. Histories are
/// not persisted, so a restored tracker normalizes scores with its EMA until
/// `min_history` new errors arrive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackerSnapshot {
    pub config: TrackerConfig,
    pub tile_height: usize,
    pub tile_width: usize,
    pub blocks_y: usize,
    pub blocks_x: usize,
    pub blocks: Vec<BlockSnapshot>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSnapshot {
    pub ema: f64,
    pub count: u64,
    pub half_width: Option<f64>,
    pub mean: f64,
    pub std: f64,
}

impl From<&TrackerState> for TrackerSnapshot {
    fn from(t: &TrackerState) -> Self {
        let (blocks_y, blocks_x) = t.block_dims();
        Self {
            config: t.config.clone(),
            tile_height: t.partition.grid_height,
            tile_width: t.partition.grid_width,
            blocks_y,
            blocks_x,
            blocks: t
                .blocks
                .iter()
                .map(|b| BlockSnapshot {
                    ema: b.ema,
                    count: b.sample_count,
                    half_width: b.calibrated_half_width,
                    mean: b.mean,
                    std: b.std(),
                })
                .collect(),
        }
    }
}

impl TryFrom<TrackerSnapshot> for TrackerState {
    type Error = Error;

    fn try_from(s: TrackerSnapshot) -> Result<Self> {
        let mut t = TrackerState::new(s.config, s.tile_height, s.tile_width)?;
        if s.blocks.len() != t.blocks.len() || t.block_dims() != (s.blocks_y, s.blocks_x) {
            return Err(Error::Shape("tracker snapshot block count mismatch".into()));
        }
        for (b, snap) in t.blocks.iter_mut().zip(s.blocks) {
            if snap.ema < 0.0 || snap.half_width.map_or(false, |h| h < 0.0) {
                return Err(Error::InvalidData("negative block statistic in snapshot".into()));
            }
            b.ema = snap.ema;
            b.sample_count = snap.count;
            b.calibrated_half_width = snap.half_width;
            b.mean = snap.mean;
            b.m2 = snap.std * snap.std * snap.count as f64;
        }
        Ok(t)
    }
}

/// Noise-versus-structure error model `sigma2 / k^2 + (lambda k)^2`.
pub fn block_size_mse(sigma2: f64, lambda: f64, k: f64) -> Result<f64> {
    check_positive(&[sigma2, lambda, k])?;
    Ok(sigma2 / (k * k) + (lambda * k).powi(2))
}

/// Linear-structure variant `sigma2 / k^2 + lambda k`.
pub fn block_size_total_error(sigma2: f64, lambda: f64, k: f64) -> Result<f64> {
    check_positive(&[sigma2, lambda, k])?;
    Ok(sigma2 / (k * k) + lambda * k)
}

/// Reference closed form `(sigma2 / (2 lambda^2))^(1/4)`.
///
/// The stationary point of [`block_size_mse`] is `(sigma2 / lambda^2)^(1/4)`
/// ([`block_size_mse_stationary`]); the two differ by a factor `2^(-1/4)`.
pub fn optimal_block_size(sigma2: f64, lambda: f64) -> Result<f64> {
    check_positive(&[sigma2, lambda])?;
    Ok((sigma2 / (2.0 * lambda * lambda)).powf(0.25))
}

pub fn block_size_mse_stationary(sigma2: f64, lambda: f64) -> Result<f64> {
    check_positive(&[sigma2, lambda])?;
    Ok((sigma2 / (lambda * lambda)).powf(0.25))
}

/// Grid search for the minimizer of [`block_size_mse`] over `candidates`.
pub fn argmin_block_size(sigma2: f64, lambda: f64, candidates: &[f64]) -> Result<f64> {
    let mut best = (f64::INFINITY, f64::NAN);
    for &k in candidates {
        let e = block_size_mse(sigma2, lambda, k)?;
        if e < best.0 {
            best = (e, k);
        }
    }
    if best.1.is_nan() {
        return Err(Error::Domain("no candidate block sizes".into()));
    }
    Ok(best.1)
}

/// Closed form and numeric optimum side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSizeAnalysis {
    pub sigma2: f64,
    pub lambda: f64,
    pub closed_form: f64,
    pub stationary_point: f64,
    pub numeric_argmin: f64,
    /// `closed_form / stationary_point`, always `2^(-1/4)`.
    pub closed_form_ratio: f64,
}

pub fn analyze_block_size(sigma2: f64, lambda: f64, candidates: &[f64]) -> Result<BlockSizeAnalysis> {
    let closed_form = optimal_block_size(sigma2, lambda)?;
    let stationary_point = block_size_mse_stationary(sigma2, lambda)?;
    Ok(BlockSizeAnalysis {
        sigma2,
        lambda,
        closed_form,
        stationary_point,
        numeric_argmin: argmin_block_size(sigma2, lambda, candidates)?,
        closed_form_ratio: closed_form / stationary_point,
    })
}

/// Mean gradient magnitude per unit distance, using central differences in
/// the interior and one-sided differences on the border.
pub fn estimate_lambda(grid: &DepthGrid, cellsize: f64) -> Result<f64> {
    let (h, w) = grid.dims();
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!("gradient needs at least 2x2, got {h}x{w}")));
    }
    check_positive(&[cellsize])?;
    let diff = |n: usize, i: usize, at: &dyn Fn(usize) -> f64| -> f64 {
        if i == 0 {
            at(1) - at(0)
        } else if i == n - 1 {
            at(n - 1) - at(n - 2)
        } else {
            (at(i + 1) - at(i - 1)) / 2.0
        }
    };
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let gx = diff(w, x, &|j| grid.get(y, j));
            let gy = diff(h, y, &|i| grid.get(i, x));
            total += gx.hypot(gy);
        }
    }
    Ok(total / (h * w) as f64 / cellsize)
}

fn check_positive(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        Some(v) => Err(Error::Domain(format!("expected a positive value, got {v}"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracker(k: usize, hw: usize) -> TrackerState {
        TrackerState::new(TrackerConfig { block_size: k, ..Default::default() }, hw, hw).unwrap()
    }

    fn grid(v: f64) -> DepthGrid {
        DepthGrid::filled(4, 4, v).unwrap()
    }

    #[test]
    fn first_update_seeds_ema() {
        let mut t = tracker(2, 4);
        t.update(&grid(0.0), &grid(0.3)).unwrap();
        assert!(t.blocks().iter().all(|b| (b.ema - 0.3).abs() < 1e-15 && b.sample_count == 1));
    }

    #[test]
    fn ema_substitution() {
        let mut t = tracker(4, 4);
        t.observe(&[0.0]).unwrap();
        t.observe(&[1.0]).unwrap();
        assert!((t.blocks()[0].ema - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_residual_decays_geometrically() {
        let mut t = tracker(4, 4);
        t.observe(&[0.5]).unwrap();
        for step in 1..=10 {
            t.update(&grid(0.2), &grid(0.2)).unwrap();
            let expect = 0.5 * 0.99f64.powi(step);
            assert!((t.blocks()[0].ema - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn nearest_rank_examples() {
        let h: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(nearest_rank(&h, 0.9), 0.9);
        assert_eq!(nearest_rank(&h, 0.01), 0.1);
        assert_eq!(nearest_rank(&h, 1.0), 1.0);
        let mut e = vec![0.01; 9];
        e.push(0.5);
        assert_eq!(quantile_of(&e, 0.9), 0.01);
    }

    #[test]
    fn scores_use_history_quantile() {
        let mut t = TrackerState::new(
            TrackerConfig { block_size: 4, min_history: 10, ..Default::default() },
            4,
            4,
        )
        .unwrap();
        for i in 1..=10 {
            t.observe(&[i as f64 / 10.0]).unwrap();
        }
        let u = t.scores_for(&[1.8]).unwrap();
        assert!((u[0] - 2.0).abs() < 1e-6);
        let u = t.scores_for(&[0.9]).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scores_fall_back_to_ema() {
        let mut t = tracker(4, 4);
        t.observe(&[0.1]).unwrap();
        let u = t.scores_for(&[0.2]).unwrap();
        assert!((u[0] - 2.0).abs() < 1e-6);
        assert_eq!(t.loss_weights(&[5.0]).unwrap()[0], 10.0);
        assert_eq!(t.loss_weights(&[0.0]).unwrap()[0], 0.1);
    }

    #[test]
    fn scores_require_update() {
        let t = tracker(2, 4);
        assert!(matches!(t.uncertainty_scores(&grid(0.0), &grid(0.0)), Err(Error::State(_))));
    }

    #[test]
    fn calibrate_constant_errors() {
        let mut t = tracker(2, 4);
        let truth: Vec<DepthGrid> = (0..10).map(|_| grid(0.5)).collect();
        let pred: Vec<DepthGrid> = (0..10).map(|_| grid(0.55)).collect();
        t.calibrate(truth.iter().zip(&pred)).unwrap();
        for h in t.half_widths().unwrap() {
            assert!((h - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn calibrate_reports_deficient_blocks() {
        let mut t = tracker(1, 4);
        let g = grid(0.0);
        let err = t.calibrate([(&g, &g)]).unwrap_err();
        match err {
            Error::Calibration { blocks } => assert_eq!(blocks.len(), 16),
            other => panic!("{other}"),
        }
        assert!(!t.is_calibrated());
    }

    #[test]
    fn bounds_examples() {
        let mut t = tracker(4, 4);
        let g = grid(0.5);
        assert!(matches!(t.bounds(&g), Err(Error::State(_))));
        let pairs: Vec<(DepthGrid, DepthGrid)> = (0..3).map(|_| (grid(0.5), grid(0.6))).collect();
        t.calibrate(pairs.iter().map(|(a, b)| (a, b))).unwrap();
        let b = t.bounds(&g).unwrap();
        assert!(b.lower.values().iter().all(|v| (v - 0.4).abs() < 1e-12));
        assert!(b.upper.values().iter().all(|v| (v - 0.6).abs() < 1e-12));
    }

    #[test]
    fn two_block_widths() {
        let mut t = TrackerState::new(
            TrackerConfig { block_size: 2, min_history: 1, ..Default::default() },
            2,
            4,
        )
        .unwrap();
        let truth = DepthGrid::filled(2, 4, 0.5).unwrap();
        let pred = DepthGrid::from_rows(&[vec![0.55, 0.55, 0.65, 0.65], vec![0.45, 0.55, 0.35, 0.65]])
            .unwrap();
        t.calibrate([(&truth, &pred)]).unwrap();
        let b = t.bounds(&pred).unwrap();
        let w = crate::metrics::uncertainty_width(&b.lower, &b.upper).unwrap();
        assert!((w - 0.2).abs() < 1e-12);
    }

    #[test]
    fn history_is_bounded() {
        let mut t = TrackerState::new(
            TrackerConfig { block_size: 4, buffer_capacity: 5, ..Default::default() },
            4,
            4,
        )
        .unwrap();
        for i in 0..12 {
            t.observe(&[i as f64]).unwrap();
        }
        let h: Vec<f64> = t.blocks()[0].history().collect();
        assert_eq!(h, vec![7.0, 8.0, 9.0, 10.0, 11.0]);
        assert_eq!(t.blocks()[0].sample_count, 12);
        assert!((t.blocks()[0].mean - 5.5).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_keeps_summaries() {
        let mut t = tracker(2, 4);
        t.update(&grid(0.0), &grid(0.25)).unwrap();
        t.update(&grid(0.0), &grid(0.75)).unwrap();
        let pairs: Vec<(DepthGrid, DepthGrid)> = (0..8).map(|_| (grid(0.5), grid(0.6))).collect();
        t.calibrate(pairs.iter().map(|(a, b)| (a, b))).unwrap();
        let back = TrackerState::from_json(&t.to_json().unwrap()).unwrap();
        for (a, b) in t.blocks().iter().zip(back.blocks()) {
            assert_eq!(a.ema, b.ema);
            assert_eq!(a.calibrated_half_width, b.calibrated_half_width);
            assert!((a.std() - b.std()).abs() < 1e-15);
            assert_eq!(b.history().len(), 0);
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrackerConfig { decay: 1.0, ..Default::default() },
            TrackerConfig { epsilon: 0.0, ..Default::default() },
            TrackerConfig { weight_clamp: (1.5, 10.0), ..Default::default() },
            TrackerConfig { block_size: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        assert!(TrackerState::new(TrackerConfig { block_size: 3, ..Default::default() }, 64, 64).is_err());
    }

    #[test]
    fn block_size_model_examples() {
        assert!((block_size_mse(1.0, 0.5, 2.0).unwrap() - 1.25).abs() < 1e-15);
        assert!((block_size_total_error(1.0, 1.0, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((optimal_block_size(1.0, 1.0).unwrap() - 0.5f64.powf(0.25)).abs() < 1e-15);
        assert!((optimal_block_size(2.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(optimal_block_size(0.0, 1.0).is_err());
        assert!(block_size_mse(1.0, -1.0, 1.0).is_err());
        let grid: Vec<f64> = (1..=100).map(|i| i as f64 / 10.0).collect();
        assert_eq!(argmin_block_size(1.0, 1.0, &grid).unwrap(), 1.0);
        let a = analyze_block_size(1.0, 1.0, &grid).unwrap();
        assert!((a.closed_form_ratio - 2f64.powf(-0.25)).abs() < 1e-15);
    }

    #[test]
    fn lambda_examples() {
        let ramp = DepthGrid::from_fn(6, 9, |_, x| 3.0 * x as f64).unwrap();
        assert!((estimate_lambda(&ramp, 1.0).unwrap() - 3.0).abs() < 1e-12);
        assert!((estimate_lambda(&ramp, 2.0).unwrap() - 1.5).abs() < 1e-12);
        let flat = DepthGrid::filled(3, 3, -10.0).unwrap();
        assert_eq!(estimate_lambda(&flat, 1.0).unwrap(), 0.0);
        assert!(estimate_lambda(&DepthGrid::filled(1, 5, 0.0).unwrap(), 1.0).is_err());
    }
}
