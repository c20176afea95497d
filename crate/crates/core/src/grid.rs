//! Raster types, depth normalization and exact block partitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest standard deviation accepted when fitting normalization statistics.
pub const MIN_STD: f64 = 1e-6;

/// Rectangular row-major raster of finite values.
///
/// Raw grids hold depths in meters (negative below sea level); normalized
/// grids hold values in `[0, 1]`. Both share this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl DepthGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty grid {height}x{width}")));
        }
        if values.len() != height * width {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width} grid",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value {} at ({}, {})",
                values[i],
                i / width,
                i % width
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(f(y, x));
            }
        }
        Self::new(height, width, values)
    }

    /// Builds a grid from nested rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(height, width, rows.concat())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `f` elementwise; the result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.height, self.width, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for x in 0..self.width {
            for y in 0..self.height {
                values.push(self.get(y, x));
            }
        }
        Self { height: self.width, width: self.height, values }
    }

    pub fn ensure_same_dims(&self, other: &DepthGrid, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Standardization statistics followed by min-max bounds in z-score space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mean: f64,
    pub std: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl NormalizationParams {
    pub fn new(mean: f64, std: f64, z_min: f64, z_max: f64) -> Result<Self> {
        let p = Self { mean, std, z_min, z_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.mean, self.std, self.z_min, self.z_max].iter().all(|v| v.is_finite()) {
            return Err(Error::Config("normalization parameters must be finite".into()));
        }
        if self.std <= 0.0 {
            return Err(Error::Config(format!("std must be positive, got {}", self.std)));
        }
        if self.z_max <= self.z_min {
            return Err(Error::Config(format!(
                "z_max ({}) must exceed z_min ({})",
                self.z_max, self.z_min
            )));
        }
        Ok(())
    }

    /// Fits mean/std over `grids`, then the z-score range over the same grids.
    ///
    /// The std is floored at [`MIN_STD`]. A degenerate (constant) z-range is
    /// widened to `z ± 0.5` so the min-max step stays invertible.
    pub fn fit<'a>(grids: impl IntoIterator<Item = &'a DepthGrid> + Clone) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = 0.0;
        for g in grids.clone() {
            n += g.len();
            sum += g.values().iter().sum::<f64>();
        }
        if n == 0 {
            return Err(Error::Config("cannot fit normalization on an empty set".into()));
        }
        let mean = sum / n as f64;
        let mut ss = 0.0;
        for g in grids.clone() {
            ss += g.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        }
        let std = (ss / n as f64).sqrt().max(MIN_STD);
        let (mut z_min, mut z_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for g in grids {
            for &v in g.values() {
                let z = (v - mean) / std;
                z_min = z_min.min(z);
                z_max = z_max.max(z);
            }
        }
        if z_max - z_min < 1e-12 {
            z_min -= 0.5;
            z_max += 0.5;
        }
        Self::new(mean, std, z_min, z_max)
    }

    #[inline]
    pub fn z_score(&self, depth: f64) -> f64 {
        (depth - self.mean) / self.std
    }

    #[inline]
    pub fn normalize_value(&self, depth: f64) -> f64 {
        ((self.z_score(depth) - self.z_min) / (self.z_max - self.z_min)).clamp(0.0, 1.0)
    }

    #[inline]
    pub fn denormalize_value(&self, unit: f64) -> f64 {
        self.mean + self.std * (self.z_min + unit * (self.z_max - self.z_min))
    }

    /// Converts a normalized-unit error magnitude back to meters.
    pub fn unit_to_meters(&self, unit: f64) -> f64 {
        unit * self.std * (self.z_max - self.z_min)
    }
}

/// Maps depths into `[0, 1]`; values outside the fitted range clamp.
pub fn normalize(grid: &DepthGrid, params: &NormalizationParams) -> Result<DepthGrid> {
    params.validate()?;
    grid.map(|v| params.normalize_value(v))
}

pub fn denormalize(grid: &DepthGrid, params: &NormalizationParams) -> Result<DepthGrid> {
    params.validate()?;
    if let Some(v) = grid.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("normalized value {v} outside [0, 1]")));
    }
    grid.map(|v| params.denormalize_value(v))
}

/// Exact tiling of an `H x W` grid into `k x k` blocks, row-major block order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub grid_height: usize,
    pub grid_width: usize,
    pub block_size: usize,
    pub n_blocks: usize,
}

impl BlockPartition {
    pub fn new(height: usize, width: usize, k: usize) -> Result<Self> {
        if height == 0 || width == 0 || k == 0 || height % k != 0 || width % k != 0 {
            return Err(Error::Partition { height, width, k });
        }
        Ok(Self {
            grid_height: height,
            grid_width: width,
            block_size: k,
            n_blocks: height * width / (k * k),
        })
    }

    pub fn blocks_y(&self) -> usize {
        self.grid_height / self.block_size
    }

    pub fn blocks_x(&self) -> usize {
        self.grid_width / self.block_size
    }

    pub fn block_area(&self) -> usize {
        self.block_size * self.block_size
    }

    #[inline]
    pub fn block_of(&self, y: usize, x: usize) -> usize {
        (y / self.block_size) * self.blocks_x() + x / self.block_size
    }

    /// Top-left pixel of block `i`.
    pub fn origin(&self, i: usize) -> (usize, usize) {
        let (by, bx) = (i / self.blocks_x(), i % self.blocks_x());
        (by * self.block_size, bx * self.block_size)
    }

    /// Pixel coordinates covered by block `i`, row-major.
    pub fn pixels(&self, i: usize) -> impl Iterator<Item = (usize, usize)> {
        let (y0, x0) = self.origin(i);
        let k = self.block_size;
        (y0..y0 + k).flat_map(move |y| (x0..x0 + k).map(move |x| (y, x)))
    }

    /// Mean of `values` (one per pixel, row-major) within each block.
    pub fn block_means(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.grid_height * self.grid_width);
        let mut sums = vec![0.0; self.n_blocks];
        for y in 0..self.grid_height {
            for x in 0..self.grid_width {
                sums[self.block_of(y, x)] += values[y * self.grid_width + x];
            }
        }
        let area = self.block_area() as f64;
        sums.iter_mut().for_each(|s| *s /= area);
        sums
    }

    /// Broadcasts one value per block to a per-pixel row-major vector.
    pub fn broadcast(&self, per_block: &[f64]) -> Vec<f64> {
        debug_assert_eq!(per_block.len(), self.n_blocks);
        let mut out = Vec::with_capacity(self.grid_height * self.grid_width);
        for y in 0..self.grid_height {
            for x in 0..self.grid_width {
                out.push(per_block[self.block_of(y, x)]);
            }
        }
        out
    }

    pub fn check_grid(&self, grid: &DepthGrid) -> Result<()> {
        if grid.dims() != (self.grid_height, self.grid_width) {
            return Err(Error::Shape(format!(
                "grid {}x{} does not match partition {}x{}",
                grid.height(),
                grid.width(),
                self.grid_height,
                self.grid_width
            )));
        }
        Ok(())
    }
}

pub fn partition(height: usize, width: usize, k: usize) -> Result<BlockPartition> {
    BlockPartition::new(height, width, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockMse {
    /// Mean squared residual over the whole grid, summed directly.
    pub global: f64,
    pub per_block: Vec<f64>,
}

impl BlockMse {
    /// `sum_i (|b_i| / HW) * mse_i`, which equals `global` for an exact tiling.
    pub fn weighted_sum(&self, part: &BlockPartition) -> f64 {
        let w = part.block_area() as f64 / (part.grid_height * part.grid_width) as f64;
        self.per_block.iter().map(|m| w * m).sum()
    }
}

pub fn block_mse_decomposition(
    truth: &DepthGrid,
    pred: &DepthGrid,
    part: &BlockPartition,
) -> Result<BlockMse> {
    truth.ensure_same_dims(pred, "block mse")?;
    part.check_grid(truth)?;
    let sq: Vec<f64> = truth
        .values()
        .iter()
        .zip(pred.values())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    let global = sq.iter().sum::<f64>() / sq.len() as f64;
    Ok(BlockMse { global, per_block: part.block_means(&sq) })
}

/// Aligned low/high resolution pair with its region tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilePair {
    pub lr: DepthGrid,
    pub hr: DepthGrid,
    pub region: String,
    pub scale: usize,
}

impl TilePair {
    pub fn new(lr: DepthGrid, hr: DepthGrid, region: impl Into<String>, scale: usize) -> Result<Self> {
        if scale == 0 || hr.height() != scale * lr.height() || hr.width() != scale * lr.width() {
            return Err(Error::Shape(format!(
                "hr {}x{} is not {scale}x lr {}x{}",
                hr.height(),
                hr.width(),
                lr.height(),
                lr.width()
            )));
        }
        Ok(Self { lr, hr, region: region.into(), scale })
    }
}
