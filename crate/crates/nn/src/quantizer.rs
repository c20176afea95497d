//! Nearest-entry vector quantization with a straight-through gradient.

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Output of [`quantize`]. `z_q` has the shape of the input rows.
#[derive(Debug, Clone)]
pub struct Quantized {
    pub z_q: Var,
    pub indices: Vec<usize>,
    pub l_vq: Var,
    pub l_div: Var,
    pub usage: Vec<usize>,
}

/// Index of the nearest row of `codebook[K, D]` to `z`, lowest index on ties.
pub fn nearest_entry<T: Scalar>(codebook: &Tensor<T>, z: &[T]) -> usize {
    let (_, d) = codebook.dims2();
    let mut best = (0, f64::INFINITY);
    for (k, e) in codebook.data().chunks(d).enumerate() {
        let dist: f64 = z.iter().zip(e).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
        if dist < best.1 {
            best = (k, dist);
        }
    }
    best.0
}

/// `log K - H(p)` for the empirical distribution of `usage`, with `0 log 0 = 0`.
pub fn usage_divergence(usage: &[usize]) -> f64 {
    let total: usize = usage.iter().sum();
    let k = usage.len() as f64;
    if total == 0 {
        return 0.0;
    }
    let h: f64 = usage
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    (k.ln() - h).clamp(0.0, k.ln())
}

/// Quantizes `z[P, D]` against `codebook[K, D]`.
///
/// `l_vq` averages squared distances over positions with the commitment
/// term scaled by `beta`. `l_div` takes its value from the hard usage counts;
/// its gradient comes from softmax assignments with `z` held fixed, so it
/// reaches the codebook only.
pub fn quantize<T: Scalar>(g: &mut Graph<T>, codebook: Var, z: Var, beta: f64, temperature: f64) -> Result<Quantized> {
    let (k, d) = g.value(codebook).dims2();
    let zs = g.value(z).shape().to_vec();
    if zs.len() != 2 || zs[1] != d {
        return Err(NnError::Shape(format!("latent rows {zs:?} against codebook dim {d}")));
    }
    if k < 2 {
        return Err(NnError::Config(format!("codebook needs at least 2 entries, got {k}")));
    }
    let p = zs[0];
    let indices: Vec<usize> = {
        let (cb, zv) = (g.value(codebook), g.value(z));
        zv.data().chunks(d).map(|row| nearest_entry(cb, row)).collect()
    };
    let mut usage = vec![0usize; k];
    indices.iter().for_each(|&i| usage[i] += 1);

    let e = g.gather_rows(codebook, indices.clone());
    let forward = g.value(e).clone();
    let z_q = g.straight_through(z, forward);

    let dim = T::of(d as f64);
    let z_sg = g.stop_gradient(z);
    let e_sg = g.stop_gradient(e);
    let diff_cb = g.sub(z_sg, e);
    let sq_cb = g.square(diff_cb);
    let codebook_term = g.mean(sq_cb);
    let diff_commit = g.sub(z, e_sg);
    let sq_commit = g.square(diff_commit);
    let commit_term = g.mean(sq_commit);
    let commit_term = g.mul_scalar(commit_term, T::of(beta));
    let l_vq = g.add(codebook_term, commit_term);
    let l_vq = g.mul_scalar(l_vq, dim);

    // Soft assignments: softmax over -(|e|^2 - 2 z.e) / t.
    let ze = g.matmul_nt(z_sg, codebook);
    let cb_sq = g.square(codebook);
    let ones = g.input(Tensor::full(&[d, 1], T::one()));
    let norms = g.matmul(cb_sq, ones);
    let norms = g.reshape(norms, &[k]);
    let logits = g.mul_scalar(ze, T::of(2.0));
    let norms = g.mul_scalar(norms, -T::one());
    let logits = g.add_bias(logits, norms);
    let logits = g.mul_scalar(logits, T::of(1.0 / temperature));
    let soft = g.softmax_rows(logits);
    let p_soft = g.mean_rows(soft);
    let guarded = g.add_scalar(p_soft, T::of(1e-12));
    let logp = g.log(guarded);
    let plogp = g.mul(p_soft, logp);
    let neg_h = g.sum(plogp);
    let l_div = g.straight_through(neg_h, Tensor::scalar(T::of(usage_divergence(&usage))));
    debug_assert_eq!(indices.len(), p);
    Ok(Quantized { z_q, indices, l_vq, l_div, usage })
}
