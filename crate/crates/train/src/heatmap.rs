//! 8-bit PGM heatmaps with a JSON sidecar recording the value range.

use std::path::{Path, PathBuf};

use abyss_core::{Bounds, DepthGrid};
use serde::{Deserialize, Serialize};

use crate::error::{io, Result, TrainError};
use crate::train::write_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMeta {
    pub kind: String,
    pub tile: String,
    pub width: usize,
    pub height: usize,
    /// Value mapped to level 0.
    pub min: f64,
    /// Value mapped to level 255.
    pub max: f64,
}

/// Min-max scales to `0..=255`; a constant grid maps to 0.
pub fn to_levels(grid: &DepthGrid) -> (Vec<u8>, f64, f64) {
    let (lo, hi) = (grid.min(), grid.max());
    let span = hi - lo;
    let levels = grid
        .values()
        .iter()
        .map(|v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
        .collect();
    (levels, lo, hi)
}

pub fn encode_pgm(width: usize, height: usize, levels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(levels);
    out
}

/// Parses a binary 8-bit PGM into `(width, height, levels)`.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |msg: &str| TrainError::Format { path: path.to_path_buf(), msg: msg.into() };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not text"))?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected an 8-bit P5 image"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let data = &bytes[pos + 1..];
    if data.len() != w * h {
        return Err(bad("pixel count does not match header"));
    }
    Ok((w, h, data.to_vec()))
}

pub fn write_heatmap(dir: &Path, kind: &str, tile: &str, grid: &DepthGrid) -> Result<(PathBuf, HeatmapMeta)> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let name = format!("{kind}_{tile}");
    let (levels, min, max) = to_levels(grid);
    let path = dir.join(format!("{name}.pgm"));
    std::fs::write(&path, encode_pgm(grid.width(), grid.height(), &levels)).map_err(io(&path))?;
    let meta = HeatmapMeta { kind: kind.into(), tile: tile.into(), width: grid.width(), height: grid.height(), min, max };
    write_json(&dir.join(format!("{name}.meta.json")), &serde_json::to_string_pretty(&meta)?)?;
    Ok((path, meta))
}

/// Writes `error_<tile>.pgm` (absolute error) and `uwidth_<tile>.pgm`
/// (interval width), each with a `.meta.json` sidecar.
pub fn emit_heatmaps(truth: &DepthGrid, pred: &DepthGrid, bounds: &Bounds, dir: &Path, tile: &str) -> Result<Vec<PathBuf>> {
    truth.ensure_same_dims(pred, "heatmap")?;
    let err = DepthGrid::new(
        truth.height(),
        truth.width(),
        truth.values().iter().zip(pred.values()).map(|(a, b)| (a - b).abs()).collect(),
    )?;
    let (e, _) = write_heatmap(dir, "error", tile, &err)?;
    let (u, _) = write_heatmap(dir, "uwidth", tile, &bounds.width_map())?;
    Ok(vec![e, u])
}
