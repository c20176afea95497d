//! Classical upscaling baselines on the align-corners grid.
//!
//! Output index `i` samples source position `i * (n_in - 1) / (n_out - 1)`.
//! Taps that fall outside the source clamp to the nearest edge sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DepthGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpMethod {
    Nearest,
    Bilinear,
    Bicubic,
}

impl InterpMethod {
    pub const ALL: [InterpMethod; 3] = [Self::Nearest, Self::Bilinear, Self::Bicubic];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nearest => "nearest",
            Self::Bilinear => "bilinear",
            Self::Bicubic => "bicubic",
        }
    }
}

impl std::fmt::Display for InterpMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for InterpMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "bilinear" => Ok(Self::Bilinear),
            "bicubic" => Ok(Self::Bicubic),
            other => Err(Error::Config(format!("unknown interpolation method `{other}`"))),
        }
    }
}

/// Four-tap cubic kernel used by [`InterpMethod::Bicubic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CubicKernel {
    /// Piecewise cubic Lagrange interpolation through the four nearest samples.
    /// Reproduces cubic polynomials exactly away from the borders.
    Lagrange,
    /// Keys cubic convolution. With `a = -0.5` it reproduces quadratics.
    Keys { a: f64 },
}

impl Default for CubicKernel {
    fn default() -> Self {
        CubicKernel::Lagrange
    }
}

impl CubicKernel {
    /// Weights for taps at offsets -1, 0, 1, 2 given fractional position `t` in `[0, 1)`.
    pub fn weights(self, t: f64) -> [f64; 4] {
        match self {
            CubicKernel::Lagrange => [
                -t * (t - 1.0) * (t - 2.0) / 6.0,
                (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
                -(t + 1.0) * t * (t - 2.0) / 2.0,
                (t + 1.0) * t * (t - 1.0) / 6.0,
            ],
            CubicKernel::Keys { a } => {
                let keys = |d: f64| {
                    let d = d.abs();
                    if d <= 1.0 {
                        (a + 2.0) * d * d * d - (a + 3.0) * d * d + 1.0
                    } else if d < 2.0 {
                        a * d * d * d - 5.0 * a * d * d + 8.0 * a * d - 4.0 * a
                    } else {
                        0.0
                    }
                };
                [keys(t + 1.0), keys(t), keys(1.0 - t), keys(2.0 - t)]
            }
        }
    }
}

/// Align-corners source coordinate for output index `i`.
pub fn source_position(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out <= 1 || n_in <= 1 {
        0.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

/// Taps (clamped source indices) and weights for one output sample.
#[derive(Debug, Clone)]
struct Taps {
    idx: Vec<usize>,
    w: Vec<f64>,
}

fn axis_taps(n_in: usize, n_out: usize, method: InterpMethod, kernel: CubicKernel) -> Vec<Taps> {
    let last = n_in as isize - 1;
    let clamp = |i: isize| i.clamp(0, last) as usize;
    (0..n_out)
        .map(|i| {
            let src = source_position(i, n_in, n_out);
            match method {
                InterpMethod::Nearest => {
                    // exact .5 ties go to the lower index
                    let j = (src - 0.5).ceil().max(0.0) as isize;
                    Taps { idx: vec![clamp(j)], w: vec![1.0] }
                }
                InterpMethod::Bilinear => {
                    let j = (src.floor() as isize).min((last - 1).max(0));
                    let t = src - j as f64;
                    Taps { idx: vec![clamp(j), clamp(j + 1)], w: vec![1.0 - t, t] }
                }
                InterpMethod::Bicubic => {
                    let j = (src.floor() as isize).min((last - 1).max(0));
                    let t = src - j as f64;
                    let w = kernel.weights(t);
                    Taps { idx: (-1..=2).map(|o| clamp(j + o)).collect(), w: w.to_vec() }
                }
            }
        })
        .collect()
}

pub fn upsample(grid: &DepthGrid, s: usize, method: InterpMethod) -> Result<DepthGrid> {
    upsample_with(grid, s, method, CubicKernel::default())
}

pub fn upsample_with(
    grid: &DepthGrid,
    s: usize,
    method: InterpMethod,
    kernel: CubicKernel,
) -> Result<DepthGrid> {
    if s == 0 {
        return Err(Error::Domain("upsampling factor must be at least 1".into()));
    }
    let (h, w) = grid.dims();
    let (oh, ow) = (h * s, w * s);
    let tx = axis_taps(w, ow, method, kernel);
    let ty = axis_taps(h, oh, method, kernel);

    // rows first, then columns
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = grid.row(y);
        for (x, taps) in tx.iter().enumerate() {
            rows[y * ow + x] = taps.idx.iter().zip(&taps.w).map(|(&j, &wt)| wt * src[j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for (y, taps) in ty.iter().enumerate() {
        for x in 0..ow {
            out[y * ow + x] = taps
                .idx
                .iter()
                .zip(&taps.w)
                .map(|(&j, &wt)| wt * rows[j * ow + x])
                .sum();
        }
    }
    DepthGrid::new(oh, ow, out)
}
