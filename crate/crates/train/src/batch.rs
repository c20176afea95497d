//! Conversions between grids and model tensors.

use abyss_core::{DepthGrid, TilePair};
use abyss_nn::Tensor;

use crate::error::Result;

/// Stacks grids of equal size into `[N, 1, H, W]`.
pub fn stack<'a>(grids: impl IntoIterator<Item = &'a DepthGrid>) -> Result<Tensor<f32>> {
    let mut data = Vec::new();
    let mut dims = None;
    let mut n = 0;
    for g in grids {
        if *dims.get_or_insert(g.dims()) != g.dims() {
            return Err(abyss_core::Error::Shape("tiles in a batch differ in size".into()).into());
        }
        data.extend(g.values().iter().map(|&v| v as f32));
        n += 1;
    }
    let (h, w) = dims.unwrap_or((0, 0));
    Ok(Tensor::new(&[n, 1, h, w], data)?)
}

pub fn unstack(t: &Tensor<f32>) -> Result<Vec<DepthGrid>> {
    let (n, _, h, w) = t.dims4();
    (0..n)
        .map(|i| Ok(DepthGrid::new(h, w, t.sample(i).iter().map(|&v| v as f64).collect())?))
        .collect()
}

pub fn lr_batch(pairs: &[&TilePair]) -> Result<Tensor<f32>> {
    stack(pairs.iter().map(|p| &p.lr))
}

pub fn hr_batch(pairs: &[&TilePair]) -> Result<Tensor<f32>> {
    stack(pairs.iter().map(|p| &p.hr))
}
