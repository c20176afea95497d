use abyss_core::{DataConfig, InterpMethod, TrackerConfig};
use abyss_nn::{ModelConfig, ModelKind};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam step size.
    pub step_size: f64,
    /// Share of each region's training tiles held out for calibration,
    /// taken from the end of the region's list.
    pub calibration_fraction: f64,
    pub seed: u64,
    pub tracker: TrackerConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            step_size: 1e-3,
            calibration_fraction: 0.1,
            seed: 7,
            tracker: TrackerConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(TrainError::Config(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(0.0..1.0).contains(&self.calibration_fraction) {
            return Err(TrainError::Config(format!(
                "calibration_fraction must be in [0, 1), got {}",
                self.calibration_fraction
            )));
        }
        self.tracker.validate()?;
        self.model.validate()?;
        Ok(())
    }
}

/// A method compared in evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nearest,
    Bilinear,
    Bicubic,
    UaSrcnn,
    UaVqvae,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Nearest, Method::Bilinear, Method::Bicubic, Method::UaSrcnn, Method::UaVqvae];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nearest => "nearest",
            Method::Bilinear => "bilinear",
            Method::Bicubic => "bicubic",
            Method::UaSrcnn => "ua_srcnn",
            Method::UaVqvae => "ua_vqvae",
        }
    }

    pub fn interp(self) -> Option<InterpMethod> {
        match self {
            Method::Nearest => Some(InterpMethod::Nearest),
            Method::Bilinear => Some(InterpMethod::Bilinear),
            Method::Bicubic => Some(InterpMethod::Bicubic),
            _ => None,
        }
    }

    pub fn model_kind(self) -> Option<ModelKind> {
        match self {
            Method::UaSrcnn => Some(ModelKind::UaSrcnn),
            Method::UaVqvae => Some(ModelKind::UaVqvae),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| TrainError::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    /// Validation tiles (by index) that get error and width heatmaps.
    pub heatmap_tiles: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { methods: Method::ALL.to_vec(), heatmap_tiles: vec![0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub block_sizes: Vec<usize>,
    /// Train a fresh model per block size instead of sharing one model.
    pub retrain: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { block_sizes: vec![1, 2, 4, 8, 16], retrain: false }
    }
}

/// Everything a run needs. `seed` overrides the component seeds on [`resolve`](Self::resolve).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            data: DataConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Propagates the top-level seed and scale, then validates.
    pub fn resolve(mut self) -> Result<Self> {
        self.data.seed = self.seed;
        self.train.seed = self.seed;
        self.train.model.seed = self.seed;
        self.train.model.scale = self.data.scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        let side = self.data.tile_size;
        if side % self.train.tracker.block_size != 0 {
            return Err(TrainError::Config(format!(
                "block size {} does not divide the tile side {side}",
                self.train.tracker.block_size
            )));
        }
        if let Some(k) = self.sweep.block_sizes.iter().find(|k| **k == 0 || side % **k != 0) {
            return Err(TrainError::Config(format!("sweep block size {k} does not divide the tile side {side}")));
        }
        if self.eval.methods.is_empty() {
            return Err(TrainError::Config("eval.methods is empty".into()));
        }
        Ok(())
    }

    /// Model config for `kind` with everything else shared.
    pub fn model_for(&self, kind: ModelKind) -> ModelConfig {
        let base = match kind {
            ModelKind::UaVqvae => ModelConfig::default(),
            ModelKind::UaSrcnn => ModelConfig::srcnn(),
        };
        if self.train.model.kind == kind {
            self.train.model.clone()
        } else {
            ModelConfig { kind, seed: self.seed, scale: self.data.scale, ..base }
        }
    }

    /// Stable hex digest of the JSON form.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
