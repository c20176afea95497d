//! Training, calibration, evaluation, block-size sweeps and report output.

pub mod batch;
pub mod config;
pub mod error;
pub mod eval;
pub mod heatmap;
pub mod pipeline;
pub mod report;
pub mod sweep;
pub mod threads;
pub mod train;

pub use config::{EvalConfig, ExperimentConfig, Method, SweepConfig, TrainConfig};
pub use error::{Result, TrainError};
pub use eval::{evaluate, evaluate_predictions, overall_row, EvalOutput, Predictor};
pub use report::{emit_report, Report, ReportMetadata};
pub use sweep::{block_size_sweep, SweepOutcome};
pub use train::{run_calibration, split_calibration, train, LossTrace, Trained};
