//! Core numerics for bathymetric super-resolution experiments.

pub mod error;
pub mod grid;
pub mod interp;
pub mod metrics;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use grid::{
    block_mse_decomposition, denormalize, normalize, partition, BlockMse, BlockPartition, DepthGrid,
    NormalizationParams, TilePair,
};
pub use interp::{upsample, upsample_with, CubicKernel, InterpMethod};
pub use metrics::{Bounds, MetricsRow};
pub use synth::{build_manifest, DataConfig, Dataset, DatasetManifest, SyntheticSpec};
pub use tracker::{TrackerConfig, TrackerState};
