//! Uncertainty-weighted composite loss.

use abyss_core::metrics::{gaussian_taps, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::model::ModelConfig;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Loss node plus the value of each term.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub recon: Var,
    pub recon_value: f64,
    pub ssim_value: f64,
    pub vq_value: f64,
    pub div_value: f64,
}

impl LossTerms {
    pub fn total_value<T: Scalar>(&self, g: &Graph<T>) -> f64 {
        g.value(self.total).item().as_f64()
    }
}

/// Expands per-block weights `[N, by, bx]` to a per-pixel map `[N, 1, H, W]`.
pub fn weight_map<T: Scalar>(weights: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let s = weights.shape();
    if s.len() != 3 || s[1] == 0 || s[2] == 0 || h % s[1] != 0 || w % s[2] != 0 || h / s[1] != w / s[2] {
        return Err(NnError::Shape(format!("block weights {s:?} do not partition a {h}x{w} tile")));
    }
    let (n, by, bx) = (s[0], s[1], s[2]);
    let k = h / by;
    let mut out = Vec::with_capacity(n * h * w);
    for img in weights.data().chunks(by * bx) {
        for y in 0..h {
            for x in 0..w {
                out.push(img[(y / k) * bx + x / k]);
            }
        }
    }
    Tensor::new(&[n, 1, h, w], out)
}

/// Mean SSIM over the valid region of each image, averaged over the batch.
pub fn ssim_node<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    let (_, _, h, w) = g.value(a).dims4();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(NnError::Shape(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let taps: Vec<T> = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA).into_iter().map(T::of).collect();
    let (c1, c2) = (T::of(SSIM_C1), T::of(SSIM_C2));
    let mu_a = g.filter_valid(a, taps.clone());
    let mu_b = g.filter_valid(b, taps.clone());
    let aa = g.square(a);
    let bb = g.square(b);
    let ab = g.mul(a, b);
    let e_aa = g.filter_valid(aa, taps.clone());
    let e_bb = g.filter_valid(bb, taps.clone());
    let e_ab = g.filter_valid(ab, taps);
    let mu_aa = g.square(mu_a);
    let mu_bb = g.square(mu_b);
    let mu_ab = g.mul(mu_a, mu_b);
    let var_a = g.sub(e_aa, mu_aa);
    let var_b = g.sub(e_bb, mu_bb);
    let cov = g.sub(e_ab, mu_ab);
    let num1 = g.mul_scalar(mu_ab, T::of(2.0));
    let num1 = g.add_scalar(num1, c1);
    let num2 = g.mul_scalar(cov, T::of(2.0));
    let num2 = g.add_scalar(num2, c2);
    let den1 = g.add(mu_aa, mu_bb);
    let den1 = g.add_scalar(den1, c1);
    let den2 = g.add(var_a, var_b);
    let den2 = g.add_scalar(den2, c2);
    let num = g.mul(num1, num2);
    let den = g.mul(den1, den2);
    let map = g.div(num, den);
    Ok(g.mean(map))
}

/// `mean(U * (pred - target)^2) + lambda_s (1 - SSIM) + lambda_c l_vq + lambda_d l_div`.
///
/// `block_weights` holds one weight per block and image, shape `[N, by, bx]`.
/// Latent terms are skipped when absent or when the model kind ignores them.
pub fn total_loss<T: Scalar>(
    g: &mut Graph<T>,
    pred: Var,
    target: &Tensor<T>,
    block_weights: &Tensor<T>,
    l_vq: Option<Var>,
    l_div: Option<Var>,
    config: &ModelConfig,
) -> Result<LossTerms> {
    if g.value(pred).shape() != target.shape() {
        return Err(NnError::Shape(format!(
            "prediction {:?} vs target {:?}",
            g.value(pred).shape(),
            target.shape()
        )));
    }
    let (n, _, h, w) = target.dims4();
    if block_weights.shape().first() != Some(&n) {
        return Err(NnError::Shape(format!("block weights {:?} for a batch of {n}", block_weights.shape())));
    }
    let wmap = g.input(weight_map(block_weights, h, w)?);
    let t = g.input(target.clone());
    let r = g.sub(pred, t);
    let r2 = g.square(r);
    let weighted = g.mul(wmap, r2);
    let recon = g.mean(weighted);
    let ssim = ssim_node(g, pred, t)?;
    let (ls, lc, ld) = config.effective_lambdas();
    let one_minus = g.mul_scalar(ssim, -T::one());
    let one_minus = g.add_scalar(one_minus, T::one());
    let ssim_term = g.mul_scalar(one_minus, T::of(ls));
    let mut total = g.add(recon, ssim_term);
    let value = |g: &Graph<T>, v: Option<Var>| v.map_or(0.0, |v| g.value(v).item().as_f64());
    let (vq_value, div_value) = (value(g, l_vq), value(g, l_div));
    if let (Some(v), true) = (l_vq, lc > 0.0) {
        let term = g.mul_scalar(v, T::of(lc));
        total = g.add(total, term);
    }
    if let (Some(v), true) = (l_div, ld > 0.0) {
        let term = g.mul_scalar(v, T::of(ld));
        total = g.add(total, term);
    }
    Ok(LossTerms {
        total,
        recon,
        recon_value: g.value(recon).item().as_f64(),
        ssim_value: g.value(ssim).item().as_f64(),
        vq_value,
        div_value,
    })
}
