//! Synthetic seafloor tiles, LR degradation and stratified dataset manifests.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{normalize, DepthGrid, NormalizationParams, TilePair};

/// Parameters for one synthetic high-resolution tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub size: usize,
    pub base_depth: f64,
    pub relief_amplitude: f64,
    pub n_seamounts: usize,
    pub n_ridges: usize,
    pub n_trenches: usize,
    pub noise_sigma: f64,
}

impl SyntheticSpec {
    pub fn validate(&self, scale: usize, max_block: usize) -> Result<()> {
        if self.size < 8 {
            return Err(Error::Config(format!("tile size {} < 8", self.size)));
        }
        for (what, d) in [("scale", scale), ("block size", max_block)] {
            if d == 0 || self.size % d != 0 {
                return Err(Error::Config(format!("tile size {} not divisible by {what} {d}", self.size)));
            }
        }
        if !(self.noise_sigma >= 0.0) || !(self.relief_amplitude >= 0.0) {
            return Err(Error::Config("noise_sigma and relief_amplitude must be non-negative".into()));
        }
        if !self.base_depth.is_finite() || self.base_depth > 0.0 {
            return Err(Error::Config("base_depth must be finite and <= 0".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent stream keys.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream key for tile `index` of region `region` under a global seed.
pub fn tile_seed(seed: u64, region: usize, index: usize) -> u64 {
    mix(mix(mix(seed) ^ region as u64) ^ index as u64)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Generates a depth tile: smooth base surface, ridge crests, seamounts,
/// trenches and additive measurement noise, clipped to depths `<= 0`.
///
/// Crests, seamounts and trenches are narrow (0.5 to 2 px spread), so a
/// large share of their energy sits above the Nyquist rate of a 2x
/// mean-pooled copy.
pub fn generate_bathymetry(spec: &SyntheticSpec) -> Result<DepthGrid> {
    spec.validate(1, 1)?;
    let n = spec.size;
    let nf = n as f64;
    let amp = spec.relief_amplitude;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut z = vec![spec.base_depth; n * n];

    let add = |z: &mut [f64], f: &dyn Fn(f64, f64) -> f64| {
        for y in 0..n {
            for x in 0..n {
                z[y * n + x] += f(y as f64, x as f64);
            }
        }
    };

    // band-limited base: a few plane waves at 0.5..4 cycles per tile, 1/f amplitude
    if amp > 0.0 {
        for _ in 0..6 {
            let freq = uniform(&mut rng, 0.5, 4.0);
            let theta = uniform(&mut rng, 0.0, 2.0 * PI);
            let phase = uniform(&mut rng, 0.0, 2.0 * PI);
            let a = 0.1 * amp / freq;
            let (ky, kx) = (2.0 * PI * freq * theta.sin() / nf, 2.0 * PI * freq * theta.cos() / nf);
            add(&mut z, &|y, x| a * (ky * y + kx * x + phase).cos());
        }
    }

    for _ in 0..spec.n_ridges {
        let (cy, cx) = (uniform(&mut rng, 0.0, nf), uniform(&mut rng, 0.0, nf));
        let theta = uniform(&mut rng, 0.0, PI);
        let width = uniform(&mut rng, 0.5, 1.0);
        let length = uniform(&mut rng, 0.4, 1.2) * nf;
        let height = amp * uniform(&mut rng, 0.5, 1.0);
        let (s, c) = theta.sin_cos();
        add(&mut z, &|y, x| {
            let (dy, dx) = (y - cy, x - cx);
            let along = dx * c + dy * s;
            let across = -dx * s + dy * c;
            height * (-across * across / (2.0 * width * width)).exp()
                * (-along * along / (2.0 * length * length)).exp()
        });
    }

    for _ in 0..spec.n_seamounts {
        let (cy, cx) = (uniform(&mut rng, 0.0, nf), uniform(&mut rng, 0.0, nf));
        let radius = uniform(&mut rng, 0.8, 2.0);
        let height = amp * uniform(&mut rng, 0.6, 1.5);
        add(&mut z, &|y, x| {
            let r2 = (y - cy).powi(2) + (x - cx).powi(2);
            height * (-r2 / (2.0 * radius * radius)).exp()
        });
    }

    for _ in 0..spec.n_trenches {
        let (cy, cx) = (uniform(&mut rng, 0.0, nf), uniform(&mut rng, 0.0, nf));
        let theta = uniform(&mut rng, 0.0, PI);
        let width = uniform(&mut rng, 0.5, 1.0);
        let length = uniform(&mut rng, 0.5, 1.5) * nf;
        let depth = amp * uniform(&mut rng, 1.0, 2.0);
        let (s, c) = theta.sin_cos();
        add(&mut z, &|y, x| {
            let (dy, dx) = (y - cy, x - cx);
            let along = dx * c + dy * s;
            let across = -dx * s + dy * c;
            -depth * (-across * across / (2.0 * width * width)).exp()
                * (-along * along / (2.0 * length * length)).exp()
        });
    }

    if spec.noise_sigma > 0.0 {
        for v in z.iter_mut() {
            *v += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    for v in z.iter_mut() {
        *v = v.min(0.0);
    }
    DepthGrid::new(n, n, z)
}

/// Mean-pools `s x s` blocks.
pub fn degrade(hr: &DepthGrid, s: usize) -> Result<DepthGrid> {
    let (h, w) = hr.dims();
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::Shape(format!("factor {s} does not divide {h}x{w}")));
    }
    let inv = 1.0 / (s * s) as f64;
    DepthGrid::from_fn(h / s, w / s, |y, x| {
        let mut acc = 0.0;
        for dy in 0..s {
            acc += hr.row(y * s + dy)[x * s..(x + 1) * s].iter().sum::<f64>();
        }
        acc * inv
    })
}

/// Header of an ESRI ASCII grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsciiHeader {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub header: AsciiHeader,
    pub grid: DepthGrid,
}

/// Parses ESRI ASCII grid text. NODATA cells are replaced by the mean of the
/// valid cells.
pub fn parse_ascii_grid(text: &str, path: &Path) -> Result<AsciiGrid> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut cellsize = None;
    let mut nodata = None;
    let mut lines = text.lines().enumerate().peekable();
    let mut last_header_line = 0;

    while let Some(&(i, line)) = lines.peek() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let lineno = i + 1;
        let value = parts
            .next()
            .ok_or_else(|| err(lineno, format!("header key `{key}` has no value")))?;
        let num: f64 = value
            .parse()
            .map_err(|_| err(lineno, format!("bad value `{value}` for `{key}`")))?;
        let count = || -> Result<usize> {
            if num >= 1.0 && num.fract() == 0.0 {
                Ok(num as usize)
            } else {
                Err(err(lineno, format!("`{key}` must be a positive integer")))
            }
        };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => ncols = Some(count()?),
            "nrows" => nrows = Some(count()?),
            "xllcorner" | "xllcenter" => xll = Some(num),
            "yllcorner" | "yllcenter" => yll = Some(num),
            "cellsize" => cellsize = Some(num),
            "nodata_value" => nodata = Some(num),
            other => return Err(err(lineno, format!("unknown header key `{other}`"))),
        }
        last_header_line = lineno;
        lines.next();
    }

    let missing = |k: &str| err(last_header_line + 1, format!("header is missing `{k}`"));
    let header = AsciiHeader {
        ncols: ncols.ok_or_else(|| missing("ncols"))?,
        nrows: nrows.ok_or_else(|| missing("nrows"))?,
        xll: xll.ok_or_else(|| missing("xllcorner"))?,
        yll: yll.ok_or_else(|| missing("yllcorner"))?,
        cellsize: cellsize.ok_or_else(|| missing("cellsize"))?,
        nodata,
    };

    let expected = header.ncols * header.nrows;
    let mut values = Vec::with_capacity(expected);
    for (i, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| err(i + 1, format!("bad value `{tok}`")))?;
            values.push(v);
        }
    }
    if values.len() != expected {
        return Err(err(
            text.lines().count(),
            format!("expected {expected} values ({}x{}), found {}", header.nrows, header.ncols, values.len()),
        ));
    }

    let is_nodata = |v: f64| header.nodata.map_or(false, |nd| v == nd) || !v.is_finite();
    let valid: Vec<f64> = values.iter().copied().filter(|&v| !is_nodata(v)).collect();
    if valid.is_empty() {
        return Err(Error::InvalidData(format!("{}: every cell is NODATA", path.display())));
    }
    let fill = valid.iter().sum::<f64>() / valid.len() as f64;
    for v in values.iter_mut() {
        if is_nodata(*v) {
            *v = fill;
        }
    }
    let grid = DepthGrid::new(header.nrows, header.ncols, values)?;
    Ok(AsciiGrid { header, grid })
}

pub fn load_ascii_grid(path: impl AsRef<Path>) -> Result<DepthGrid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_ascii_grid(&text, path)?.grid)
}

/// Raw tile encoding: `u32` height, `u32` width (little endian), then
/// `height * width` little-endian `f32` values.
pub fn encode_tile(grid: &DepthGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * grid.len());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    for &v in grid.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_tile(bytes: &[u8]) -> Result<DepthGrid> {
    if bytes.len() < 8 {
        return Err(Error::InvalidData("tile shorter than its header".into()));
    }
    let h = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != 4 * h * w {
        return Err(Error::InvalidData(format!(
            "tile header says {h}x{w} but body holds {} bytes",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    DepthGrid::new(h, w, values)
}

pub fn write_tile(path: &Path, grid: &DepthGrid) -> Result<()> {
    fs::write(path, encode_tile(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_tile(path: &Path) -> Result<DepthGrid> {
    decode_tile(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Feature mix for one region; per-tile specs jitter around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionProfile {
    pub base_depth: f64,
    pub base_depth_jitter: f64,
    pub relief_amplitude: f64,
    pub n_seamounts: usize,
    pub n_ridges: usize,
    pub n_trenches: usize,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub name: String,
    /// Train plus validation tiles.
    pub tiles: usize,
    pub profile: RegionProfile,
}

pub const DEFAULT_REGIONS: [&str; 6] = [
    "Eastern Pacific Basin",
    "Eastern Atlantic Coast",
    "Western Pacific Region",
    "South Pacific Region",
    "North Atlantic Basin",
    "Indian Ocean Basin",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub seed: u64,
    pub tile_size: usize,
    pub scale: usize,
    pub split_ratio: f64,
    /// Largest block size the tiles must support.
    pub max_block_size: usize,
    pub regions: Vec<RegionConfig>,
}

impl Default for DataConfig {
    /// Six regions at 1/100 of the GEBCO reference sample counts (the smallest
    /// rounded up), 64 px high-resolution tiles, 2x scale.
    fn default() -> Self {
        let profile = |base: f64, relief: f64, sm: usize, ri: usize, tr: usize| RegionProfile {
            base_depth: base,
            base_depth_jitter: 50.0,
            relief_amplitude: relief,
            n_seamounts: sm,
            n_ridges: ri,
            n_trenches: tr,
            noise_sigma: 5.0,
        };
        let regions = [
            (300, profile(-4000.0, 700.0, 24, 6, 0)),
            (180, profile(-3600.0, 500.0, 6, 12, 6)),
            (150, profile(-4400.0, 800.0, 6, 6, 12)),
            (80, profile(-3800.0, 600.0, 30, 6, 0)),
            (50, profile(-3900.0, 700.0, 6, 18, 0)),
            (10, profile(-4100.0, 650.0, 12, 12, 6)),
        ];
        Self {
            seed: 7,
            tile_size: 64,
            scale: 2,
            split_ratio: 0.8,
            max_block_size: 16,
            regions: DEFAULT_REGIONS
                .iter()
                .zip(regions)
                .map(|(name, (tiles, profile))| RegionConfig { name: name.to_string(), tiles, profile })
                .collect(),
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            return Err(Error::Config("at least one region is required".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config("split_ratio must lie in (0, 1)".into()));
        }
        for r in &self.regions {
            if r.tiles == 0 {
                return Err(Error::Config(format!("region `{}` has no tiles", r.name)));
            }
            if !DEFAULT_REGIONS.contains(&r.name.as_str()) {
                return Err(Error::Config(format!("unknown region `{}`", r.name)));
            }
            self.tile_spec(r, 0, 0).validate(self.scale, self.max_block_size)?;
        }
        Ok(())
    }

    /// `(train, val)` counts for a region total.
    pub fn split(&self, total: usize) -> (usize, usize) {
        let train = ((total as f64 * self.split_ratio).round() as usize).clamp(1, total);
        (train, total - train)
    }

    fn tile_spec(&self, r: &RegionConfig, region_idx: usize, tile_idx: usize) -> SyntheticSpec {
        let seed = tile_seed(self.seed, region_idx, tile_idx);
        let jitter = ((mix(seed) >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) * r.profile.base_depth_jitter;
        SyntheticSpec {
            seed,
            size: self.tile_size,
            base_depth: (r.profile.base_depth + jitter).min(0.0),
            relief_amplitude: r.profile.relief_amplitude,
            n_seamounts: r.profile.n_seamounts,
            n_ridges: r.profile.n_ridges,
            n_trenches: r.profile.n_trenches,
            noise_sigma: r.profile.noise_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRegion {
    pub name: String,
    pub train_count: usize,
    pub val_count: usize,
    pub profile: RegionProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub regions: Vec<ManifestRegion>,
    pub normalization: NormalizationParams,
    pub scale: usize,
    pub tile_size: usize,
    pub split_ratio: f64,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn train_total(&self) -> usize {
        self.regions.iter().map(|r| r.train_count).sum()
    }

    pub fn val_total(&self) -> usize {
        self.regions.iter().map(|r| r.val_count).sum()
    }
}

/// Tile pairs in meters, grouped by split in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: Vec<TilePair>,
    pub val: Vec<TilePair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

fn slug(name: &str) -> String {
    name.to_ascii_lowercase().replace(' ', "_")
}

/// Path of a tile file relative to the dataset root.
pub fn tile_path(root: &Path, region: &str, split: Split, index: usize, hr: bool) -> PathBuf {
    root.join("tiles")
        .join(slug(region))
        .join(format!("{}_{index:05}_{}.f32", split.name(), if hr { "hr" } else { "lr" }))
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Generates every tile, splits each region, and fits normalization on the
/// training high-resolution tiles only.
pub fn build_manifest(config: &DataConfig) -> Result<Dataset> {
    config.validate()?;
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut regions = Vec::new();
    for (ri, r) in config.regions.iter().enumerate() {
        let (n_train, n_val) = config.split(r.tiles);
        for ti in 0..r.tiles {
            let hr = generate_bathymetry(&config.tile_spec(r, ri, ti))?;
            let lr = degrade(&hr, config.scale)?;
            let pair = TilePair::new(lr, hr, r.name.clone(), config.scale)?;
            if ti < n_train {
                train.push(pair);
            } else {
                val.push(pair);
            }
        }
        regions.push(ManifestRegion {
            name: r.name.clone(),
            train_count: n_train,
            val_count: n_val,
            profile: r.profile.clone(),
        });
    }
    let normalization = NormalizationParams::fit(train.iter().map(|p| &p.hr))?;
    Ok(Dataset {
        manifest: DatasetManifest {
            regions,
            normalization,
            scale: config.scale,
            tile_size: config.tile_size,
            split_ratio: config.split_ratio,
            seed: config.seed,
        },
        train,
        val,
    })
}

impl Dataset {
    pub fn save(&self, root: &Path) -> Result<()> {
        for (split, pairs) in [(Split::Train, &self.train), (Split::Val, &self.val)] {
            let mut counters = std::collections::HashMap::<&str, usize>::new();
            for p in pairs {
                let idx = counters.entry(p.region.as_str()).or_default();
                for (hr, g) in [(true, &p.hr), (false, &p.lr)] {
                    let path = tile_path(root, &p.region, split, *idx, hr);
                    let dir = path.parent().expect("tile path has a parent");
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    write_tile(&path, g)?;
                }
                *idx += 1;
            }
        }
        let path = root.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&self.manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.normalization.validate()?;
        let mut train = Vec::new();
        let mut val = Vec::new();
        for r in &manifest.regions {
            for (split, count, out) in
                [(Split::Train, r.train_count, &mut train), (Split::Val, r.val_count, &mut val)]
            {
                for i in 0..count {
                    let hr = read_tile(&tile_path(root, &r.name, split, i, true))?;
                    let lr = read_tile(&tile_path(root, &r.name, split, i, false))?;
                    out.push(TilePair::new(lr, hr, r.name.clone(), manifest.scale)?);
                }
            }
        }
        Ok(Self { manifest, train, val })
    }

    /// Same pairs mapped into `[0, 1]` with the manifest normalization.
    pub fn normalized(&self) -> Result<Self> {
        let p = &self.manifest.normalization;
        let norm = |pairs: &[TilePair]| -> Result<Vec<TilePair>> {
            pairs
                .iter()
                .map(|t| TilePair::new(normalize(&t.lr, p)?, normalize(&t.hr, p)?, t.region.clone(), t.scale))
                .collect()
        };
        Ok(Self { manifest: self.manifest.clone(), train: norm(&self.train)?, val: norm(&self.val)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            seed,
            size: 32,
            base_depth: -3000.0,
            relief_amplitude: 500.0,
            n_seamounts: 2,
            n_ridges: 1,
            n_trenches: 1,
            noise_sigma: 5.0,
        }
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let a = generate_bathymetry(&spec(1)).unwrap();
        assert_eq!(a, generate_bathymetry(&spec(1)).unwrap());
        let b = generate_bathymetry(&spec(2)).unwrap();
        let differ = a.values().iter().zip(b.values()).filter(|(x, y)| x != y).count();
        assert!(differ as f64 >= 0.01 * a.len() as f64);
        assert!(a.values().iter().all(|&v| v <= 0.0));
    }

    #[test]
    fn all_components_off_is_flat() {
        let s = SyntheticSpec {
            relief_amplitude: 0.0,
            n_seamounts: 0,
            n_ridges: 0,
            n_trenches: 0,
            noise_sigma: 0.0,
            ..spec(3)
        };
        let g = generate_bathymetry(&s).unwrap();
        assert!(g.values().iter().all(|&v| v == -3000.0));
    }

    #[test]
    fn spec_validation() {
        assert!(SyntheticSpec { size: 4, ..spec(0) }.validate(2, 2).is_err());
        assert!(spec(0).validate(3, 1).is_err());
        assert!(spec(0).validate(2, 16).is_ok());
        assert!(SyntheticSpec { noise_sigma: -1.0, ..spec(0) }.validate(2, 2).is_err());
    }

    #[test]
    fn degrade_examples() {
        let g = DepthGrid::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(degrade(&g, 2).unwrap().values(), &[2.5]);
        let checker = DepthGrid::from_fn(4, 6, |y, x| ((y + x) % 2) as f64).unwrap();
        assert!(degrade(&checker, 2).unwrap().values().iter().all(|&v| v == 0.5));
        assert!(matches!(degrade(&checker, 4), Err(Error::Shape(_))));
    }

    #[test]
    fn ascii_basic_and_nodata() {
        let p = Path::new("mem.asc");
        let text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n3 4\n";
        let g = parse_ascii_grid(text, p).unwrap().grid;
        assert_eq!(g, DepthGrid::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n0 0 0 -9999\n";
        assert!(parse_ascii_grid(text, p).unwrap().grid.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ascii_errors_carry_lines() {
        let p = Path::new("bad.asc");
        let text = "ncols 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 4\n";
        match parse_ascii_grid(text, p) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 5);
                assert!(msg.contains("nrows"));
            }
            other => panic!("{other:?}"),
        }
        let text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n";
        assert!(matches!(parse_ascii_grid(text, p), Err(Error::Parse { .. })));
        let text = "ncols x\n";
        assert!(matches!(parse_ascii_grid(text, p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn tile_codec() {
        let g = DepthGrid::from_fn(3, 5, |y, x| -(y as f64) * 10.5 - x as f64).unwrap();
        let bytes = encode_tile(&g);
        assert_eq!(&bytes[0..8], &[3, 0, 0, 0, 5, 0, 0, 0]);
        assert_eq!(decode_tile(&bytes).unwrap(), g);
        assert!(decode_tile(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn single_region_split() {
        let mut cfg = DataConfig::default();
        cfg.regions.truncate(1);
        cfg.regions[0].tiles = 10;
        cfg.tile_size = 16;
        cfg.max_block_size = 4;
        let ds = build_manifest(&cfg).unwrap();
        assert_eq!((ds.train.len(), ds.val.len()), (8, 2));
    }

    #[test]
    fn empty_region_is_config_error() {
        let mut cfg = DataConfig::default();
        cfg.regions[2].tiles = 0;
        assert!(matches!(build_manifest(&cfg), Err(Error::Config(_))));
        cfg.regions.clear();
        assert!(matches!(build_manifest(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn default_counts_follow_reference_proportions() {
        let cfg = DataConfig::default();
        let counts: Vec<(usize, usize)> = cfg.regions.iter().map(|r| cfg.split(r.tiles)).collect();
        assert_eq!(counts, vec![(240, 60), (144, 36), (120, 30), (64, 16), (40, 10), (8, 2)]);
        let reference = [24000.0, 14400.0, 12000.0, 6400.0, 4000.0, 720.0];
        for ((t, _), p) in counts.iter().zip(reference) {
            assert!((*t as f64 - p / 100.0).abs() <= 1.0);
        }
    }
}
