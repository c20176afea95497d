//! Reconstruction and interval metrics on normalized grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DepthGrid;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// One table row. `uwidth` and `cal_err` are `None` for methods without
/// uncertainty estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub region: String,
    pub method: String,
    pub block_size: Option<usize>,
    pub ssim: f64,
    /// Infinite for exact reconstructions; stored as the string `"inf"` in JSON.
    #[serde(with = "unbounded")]
    pub psnr_db: f64,
    pub mse: f64,
    pub mae: f64,
    pub uwidth: Option<f64>,
    pub cal_err: Option<f64>,
    /// Number of tiles averaged into this row.
    pub n_tiles: usize,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(if *v > 0.0 { "inf" } else if *v < 0.0 { "-inf" } else { "nan" })
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Finite(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl MetricsRow {
    pub fn validate(&self) -> Result<()> {
        let ok = (-1.0..=1.0).contains(&self.ssim)
            && self.mse >= 0.0
            && self.mae >= 0.0
            && self.uwidth.map_or(true, |u| u >= 0.0)
            && self.cal_err.map_or(true, |c| (0.0..=1.0).contains(&c));
        if ok {
            Ok(())
        } else {
            Err(Error::Invariant(format!("metrics row out of range: {self:?}")))
        }
    }
}

pub fn mse(truth: &DepthGrid, pred: &DepthGrid) -> Result<f64> {
    truth.ensure_same_dims(pred, "mse")?;
    let s: f64 = truth.values().iter().zip(pred.values()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / truth.len() as f64)
}

pub fn mae(truth: &DepthGrid, pred: &DepthGrid) -> Result<f64> {
    truth.ensure_same_dims(pred, "mae")?;
    let s: f64 = truth.values().iter().zip(pred.values()).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / truth.len() as f64)
}

/// `10 log10(peak^2 / mse)`; identical inputs give `f64::INFINITY`.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(truth: &DepthGrid, pred: &DepthGrid, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(truth, pred)?, peak))
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode correlation with a symmetric kernel.
fn filter_valid(values: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = taps.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let r = &values[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = taps.iter().zip(&r[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * tmp[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Per-window SSIM map over the valid region.
pub fn ssim_map(a: &DepthGrid, b: &DepthGrid) -> Result<DepthGrid> {
    a.ensure_same_dims(b, "ssim")?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (x, y) = (a.values(), b.values());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let (mx, oh, ow) = filter_valid(x, h, w, &taps);
    let (my, ..) = filter_valid(y, h, w, &taps);
    let (sxx, ..) = filter_valid(&xx, h, w, &taps);
    let (syy, ..) = filter_valid(&yy, h, w, &taps);
    let (sxy, ..) = filter_valid(&xy, h, w, &taps);
    let map = (0..oh * ow)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2))
        })
        .collect();
    DepthGrid::new(oh, ow, map)
}

pub fn ssim(a: &DepthGrid, b: &DepthGrid) -> Result<f64> {
    Ok(ssim_map(a, b)?.mean())
}

/// Lower and upper prediction bounds, elementwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: DepthGrid,
    pub upper: DepthGrid,
}

impl Bounds {
    pub fn new(lower: DepthGrid, upper: DepthGrid) -> Result<Self> {
        lower.ensure_same_dims(&upper, "bounds")?;
        if let Some(i) = lower.values().iter().zip(upper.values()).position(|(l, u)| u < l) {
            return Err(Error::Invariant(format!("upper < lower at flat index {i}")));
        }
        Ok(Self { lower, upper })
    }

    pub fn width_map(&self) -> DepthGrid {
        let w = self.upper.values().iter().zip(self.lower.values()).map(|(u, l)| u - l).collect();
        DepthGrid::new(self.lower.height(), self.lower.width(), w).expect("finite widths")
    }
}

pub fn uncertainty_width(lower: &DepthGrid, upper: &DepthGrid) -> Result<f64> {
    Ok(Bounds::new(lower.clone(), upper.clone())?.width_map().mean())
}

/// Fraction of pixels with `lower <= truth <= upper`.
pub fn coverage(truth: &DepthGrid, bounds: &Bounds) -> Result<f64> {
    let (hits, n) = coverage_counts(truth, bounds)?;
    Ok(hits as f64 / n as f64)
}

pub fn coverage_counts(truth: &DepthGrid, bounds: &Bounds) -> Result<(usize, usize)> {
    truth.ensure_same_dims(&bounds.lower, "coverage")?;
    let hits = truth
        .values()
        .iter()
        .zip(bounds.lower.values().iter().zip(bounds.upper.values()))
        .filter(|(t, (l, u))| *l <= *t && *t <= *u)
        .count();
    Ok((hits, truth.len()))
}

pub fn calibration_error(coverage: f64, nominal: f64) -> f64 {
    (coverage - nominal).abs()
}
