//! UA-VQ-VAE and UA-SRCNN.

use abyss_core::{upsample, DepthGrid, InterpMethod};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::layers::{ChannelAttentionBlock, Conv2d, ResBlock};
use crate::params::{Bound, ParamId, ParamStore};
use crate::quantizer::{quantize, Quantized};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    UaVqvae,
    UaSrcnn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::UaVqvae => "ua_vqvae",
            ModelKind::UaSrcnn => "ua_srcnn",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ua_vqvae" => Ok(ModelKind::UaVqvae),
            "ua_srcnn" => Ok(ModelKind::UaSrcnn),
            other => Err(NnError::Config(format!("unknown model kind {other:?} (expected ua_vqvae or ua_srcnn)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_dims: Vec<usize>,
    pub n_residual_blocks: usize,
    pub srcnn_channels: usize,
    pub codebook_size: usize,
    pub embed_dim: usize,
    pub scale: usize,
    pub lambda_s: f64,
    pub lambda_c: f64,
    pub lambda_d: f64,
    pub commitment: f64,
    pub div_temperature: f64,
    pub attention_reduction: usize,
    /// Adds a convolved copy of the LR input to the decoder at LR resolution
    /// and predicts a logit offset from the bicubic upsample.
    pub lr_skip: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::UaVqvae,
            hidden_dims: vec![16, 32],
            n_residual_blocks: 8,
            srcnn_channels: 16,
            codebook_size: 64,
            embed_dim: 32,
            scale: 2,
            lambda_s: 10.0,
            lambda_c: 0.1,
            lambda_d: 0.1,
            commitment: 0.25,
            div_temperature: 1.0,
            attention_reduction: 4,
            lr_skip: true,
            seed: 7,
        }
    }
}

impl ModelConfig {
    pub fn srcnn() -> Self {
        Self { kind: ModelKind::UaSrcnn, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::Config(m));
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return bad(format!("hidden_dims must be non-empty and positive, got {:?}", self.hidden_dims));
        }
        if self.codebook_size < 2 {
            return bad(format!("codebook_size must be at least 2, got {}", self.codebook_size));
        }
        if self.embed_dim == 0 || self.srcnn_channels == 0 || self.attention_reduction == 0 {
            return bad("embed_dim, srcnn_channels and attention_reduction must be positive".into());
        }
        if !self.scale.is_power_of_two() {
            return bad(format!("scale must be a power of two, got {}", self.scale));
        }
        for (name, v) in [
            ("lambda_s", self.lambda_s),
            ("lambda_c", self.lambda_c),
            ("lambda_d", self.lambda_d),
            ("commitment", self.commitment),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.div_temperature.is_finite() && self.div_temperature > 0.0) {
            return bad(format!("div_temperature must be positive, got {}", self.div_temperature));
        }
        Ok(())
    }

    /// Loss weights actually applied; SRCNN has no latent terms.
    pub fn effective_lambdas(&self) -> (f64, f64, f64) {
        match self.kind {
            ModelKind::UaVqvae => (self.lambda_s, self.lambda_c, self.lambda_d),
            ModelKind::UaSrcnn => (self.lambda_s, 0.0, 0.0),
        }
    }

    /// Number of stride-2 encoder stages.
    pub fn downsample_stages(&self) -> usize {
        self.hidden_dims.len().min(2)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VqvaeLayers {
    conv_in: Conv2d,
    enc: Vec<(Conv2d, ChannelAttentionBlock)>,
    proj: Conv2d,
    codebook: ParamId,
    dec_in: Conv2d,
    dec: Vec<(Conv2d, ChannelAttentionBlock)>,
    skip: Option<Conv2d>,
    out: Conv2d,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SrcnnLayers {
    conv_in: Conv2d,
    blocks: Vec<ResBlock>,
    out: Conv2d,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Arch {
    Vqvae(VqvaeLayers),
    Srcnn(SrcnnLayers),
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOut {
    pub pred: Var,
    pub z: Option<Var>,
    pub quant: Option<Quantized>,
    pub latent_dims: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    arch: Arch,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut ps = ParamStore::new();
        let arch = match config.kind {
            ModelKind::UaVqvae => Arch::Vqvae(build_vqvae(&config, &mut ps, &mut rng)),
            ModelKind::UaSrcnn => Arch::Srcnn(build_srcnn(&config, &mut ps, &mut rng)),
        };
        Ok(Self { config, params: ps, arch })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn codebook(&self) -> Option<&Tensor<T>> {
        match &self.arch {
            Arch::Vqvae(l) => Some(self.params.get(l.codebook)),
            Arch::Srcnn(_) => None,
        }
    }

    /// Names of parameters belonging to the decoder side of the VQ-VAE,
    /// or every parameter for SRCNN.
    pub fn decoder_param_names(&self) -> Vec<String> {
        let prefixes: &[&str] = match self.arch {
            Arch::Vqvae(_) => &["dec", "skip", "out"],
            Arch::Srcnn(_) => &[""],
        };
        self.params.iter().map(|(_, n, _)| n.to_string()).filter(|n| prefixes.iter().any(|p| n.starts_with(p))).collect()
    }

    fn check_input(&self, lr: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let s = lr.shape();
        if s.len() != 4 || s[1] != 1 {
            return Err(NnError::Shape(format!("expected LR batch [N, 1, H, W], got {s:?}")));
        }
        let (n, h, w) = (s[0], s[2], s[3]);
        if self.config.kind == ModelKind::UaVqvae {
            let f = 1 << self.config.downsample_stages();
            if h % f != 0 || w % f != 0 || h == 0 || w == 0 {
                return Err(NnError::Shape(format!("LR tile {h}x{w} must be a positive multiple of {f}")));
            }
        }
        Ok((n, h, w))
    }

    /// Encoder: initial conv, then one strided or plain conv and attention block per hidden dim,
    /// then a 1x1 projection to the embedding dim. Returns `[N, D, h, w]`.
    pub fn encode(&self, g: &mut Graph<T>, p: &Bound, lr: Var) -> Result<Var> {
        let Arch::Vqvae(l) = &self.arch else {
            return Err(NnError::Config("encode needs a ua_vqvae model".into()));
        };
        self.check_input(g.value(lr))?;
        let mut x = l.conv_in.forward(g, p, lr);
        x = g.relu(x);
        for (conv, attn) in &l.enc {
            x = conv.forward(g, p, x);
            x = g.relu(x);
            x = attn.forward(g, p, x);
        }
        Ok(l.proj.forward(g, p, x))
    }

    /// Decoder from `z_q[N, D, h, w]` to a `[N, 1, H, W]` prediction in (0, 1).
    pub fn decode(&self, g: &mut Graph<T>, p: &Bound, z_q: Var, lr: Var) -> Result<Var> {
        let Arch::Vqvae(l) = &self.arch else {
            return Err(NnError::Config("decode needs a ua_vqvae model".into()));
        };
        let (n, d, zh, zw) = g.value(z_q).dims4();
        let (_, lh, lw) = self.check_input(g.value(lr))?;
        let f = 1 << self.config.downsample_stages();
        if d != self.config.embed_dim || zh * f != lh || zw * f != lw || g.value(lr).dims4().0 != n {
            return Err(NnError::Shape(format!(
                "latent [{n}, {d}, {zh}, {zw}] does not match LR {:?}",
                g.value(lr).shape()
            )));
        }
        let mut y = l.dec_in.forward(g, p, z_q);
        y = g.relu(y);
        let mut res = zh;
        for (conv, attn) in &l.dec {
            y = g.upsample_nearest(y, 2);
            res *= 2;
            y = conv.forward(g, p, y);
            if res == lh {
                if let Some(skip) = &l.skip {
                    let s = skip.forward(g, p, lr);
                    y = g.add(y, s);
                }
            }
            y = g.relu(y);
            y = attn.forward(g, p, y);
        }
        let mut logits = l.out.forward(g, p, y);
        if self.config.lr_skip {
            let base = self.base_logits(g.value(lr))?;
            let base = g.input(base);
            logits = g.add(logits, base);
        }
        Ok(g.sigmoid(logits))
    }

    /// Logit of the clamped bicubic upsample of each LR tile.
    fn base_logits(&self, lr: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, _, h, w) = lr.dims4();
        let s = self.config.scale;
        let mut out = Vec::with_capacity(n * h * w * s * s);
        for tile in lr.data().chunks(h * w) {
            let grid = DepthGrid::new(h, w, tile.iter().map(|v| v.as_f64()).collect())?;
            let up = upsample(&grid, s, InterpMethod::Bicubic)?;
            out.extend(up.values().iter().map(|&v| {
                let c = v.clamp(1e-4, 1.0 - 1e-4);
                T::of((c / (1.0 - c)).ln())
            }));
        }
        Tensor::new(&[n, 1, h * s, w * s], out)
    }

    pub fn srcnn_forward(&self, g: &mut Graph<T>, p: &Bound, lr: Var) -> Result<Var> {
        let Arch::Srcnn(l) = &self.arch else {
            return Err(NnError::Config("srcnn_forward needs a ua_srcnn model".into()));
        };
        self.check_input(g.value(lr))?;
        let x = g.upsample_nearest(lr, self.config.scale);
        let mut y = l.conv_in.forward(g, p, x);
        y = g.relu(y);
        for b in &l.blocks {
            y = b.forward(g, p, y);
        }
        let logits = l.out.forward(g, p, y);
        Ok(g.sigmoid(logits))
    }

    /// Full forward pass for either kind, reading parameters bound in `p`.
    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, lr: &Tensor<T>) -> Result<ForwardOut> {
        let x = g.input(lr.clone());
        match &self.arch {
            Arch::Srcnn(_) => {
                let pred = self.srcnn_forward(g, p, x)?;
                Ok(ForwardOut { pred, z: None, quant: None, latent_dims: None })
            }
            Arch::Vqvae(l) => {
                let z = self.encode(g, p, x)?;
                let (n, _, h, w) = g.value(z).dims4();
                let rows = g.nchw_to_rows(z);
                let q = quantize(g, p.var(l.codebook), rows, self.config.commitment, self.config.div_temperature)?;
                let z_q = g.rows_to_nchw(q.z_q, n, h, w);
                let pred = self.decode(g, p, z_q, x)?;
                Ok(ForwardOut { pred, z: Some(rows), quant: Some(q), latent_dims: Some((h, w)) })
            }
        }
    }

    /// Inference without gradient tracking; returns `[N, 1, sH, sW]`.
    pub fn predict(&self, lr: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let out = self.forward(&mut g, &p, lr)?;
        Ok(g.value(out.pred).clone())
    }

    /// Rebuilds a model from its config and replaces its parameters.
    pub fn from_parts(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let mut m = Self::new(config)?;
        m.params.load_from(&params)?;
        Ok(m)
    }
}

fn build_vqvae<T: Scalar>(c: &ModelConfig, ps: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> VqvaeLayers {
    let h = &c.hidden_dims;
    let conv_in = Conv2d::new(ps, "enc.conv_in", 1, h[0], 3, 1, rng);
    let mut enc = Vec::new();
    let mut prev = h[0];
    for (i, &ch) in h.iter().enumerate() {
        let stride = if i < 2 { 2 } else { 1 };
        let conv = Conv2d::new(ps, &format!("enc.{i}.conv"), prev, ch, 3, stride, rng);
        let attn = ChannelAttentionBlock::new(ps, &format!("enc.{i}.attn"), ch, c.attention_reduction, rng);
        enc.push((conv, attn));
        prev = ch;
    }
    let proj = Conv2d::new(ps, "enc.proj", prev, c.embed_dim, 1, 1, rng);
    let codebook = ps.add_fan_in("codebook", &[c.codebook_size, c.embed_dim], c.embed_dim, rng);
    let top = *h.last().unwrap();
    let dec_in = Conv2d::new(ps, "dec.conv_in", c.embed_dim, top, 3, 1, rng);
    let stages = c.downsample_stages() + c.scale.trailing_zeros() as usize;
    let lr_stage = c.downsample_stages();
    let mut dec = Vec::new();
    let mut skip = None;
    let mut prev = top;
    for j in 0..stages {
        let ch = if j < h.len() { h[h.len() - 1 - j] } else { h[0] };
        let conv = Conv2d::new(ps, &format!("dec.{j}.conv"), prev, ch, 3, 1, rng);
        let attn = ChannelAttentionBlock::new(ps, &format!("dec.{j}.attn"), ch, c.attention_reduction, rng);
        if c.lr_skip && j + 1 == lr_stage {
            skip = Some(Conv2d::new(ps, "skip", 1, ch, 3, 1, rng));
        }
        dec.push((conv, attn));
        prev = ch;
    }
    let out = Conv2d::zeroed(ps, "out", prev, 1, 3);
    VqvaeLayers { conv_in, enc, proj, codebook, dec_in, dec, skip, out }
}

fn build_srcnn<T: Scalar>(c: &ModelConfig, ps: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> SrcnnLayers {
    let ch = c.srcnn_channels;
    let conv_in = Conv2d::new(ps, "conv_in", 1, ch, 3, 1, rng);
    let blocks = (0..c.n_residual_blocks).map(|i| ResBlock::new(ps, &format!("block.{i}"), ch, rng)).collect();
    let out = Conv2d::zeroed(ps, "out", ch, 1, 3);
    SrcnnLayers { conv_in, blocks, out }
}
