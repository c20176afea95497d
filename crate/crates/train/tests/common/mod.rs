#![allow(dead_code)]

use abyss_core::Dataset;
use abyss_train::{pipeline, ExperimentConfig, Method};

/// Two regions of 16 px tiles and a narrow VQ-VAE; trains in seconds.
pub fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.tile_size = 16;
    cfg.data.max_block_size = 4;
    cfg.data.regions.truncate(2);
    cfg.data.regions.iter_mut().for_each(|r| r.tiles = 20);
    cfg.train.epochs = 3;
    cfg.train.batch_size = 4;
    cfg.train.tracker.block_size = 4;
    cfg.train.tracker.min_history = 8;
    cfg.train.model.hidden_dims = vec![4, 8];
    cfg.train.model.codebook_size = 8;
    cfg.train.model.embed_dim = 4;
    cfg.train.model.n_residual_blocks = 1;
    cfg.eval.methods = vec![Method::Bicubic, Method::UaVqvae];
    cfg.sweep.block_sizes = vec![2, 4, 16];
    cfg.resolve().unwrap()
}

pub fn small_data(cfg: &ExperimentConfig) -> Dataset {
    pipeline::synthesize(cfg).unwrap().normalized().unwrap()
}
