//! Parameterized building blocks.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Var};
use crate::params::{Bound, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = c_in * kernel * kernel;
        let weight = store.add_fan_in(format!("{name}.weight"), &[c_out, c_in, kernel, kernel], fan_in, rng);
        let bias = store.add_fan_in(format!("{name}.bias"), &[c_out], fan_in, rng);
        Self { weight, bias, stride, pad: kernel / 2 }
    }

    /// Same layout with weights and bias set to zero.
    pub fn zeroed<T: Scalar>(store: &mut ParamStore<T>, name: &str, c_in: usize, c_out: usize, kernel: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), Tensor::zeros(&[c_out, c_in, kernel, kernel]));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[c_out]));
        Self { weight, bias, stride: 1, pad: kernel / 2 }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        g.conv2d(x, p.var(self.weight), Some(p.var(self.bias)), self.stride, self.pad)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = store.add_fan_in(format!("{name}.weight"), &[d_in, d_out], d_in, rng);
        let bias = store.add_fan_in(format!("{name}.bias"), &[d_out], d_in, rng);
        Self { weight, bias }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        let y = g.matmul(x, p.var(self.weight));
        g.add_bias(y, p.var(self.bias))
    }
}

/// conv-ReLU-conv with an identity skip.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

impl ResBlock {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, c: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv1: Conv2d::new(store, &format!("{name}.conv1"), c, c, 3, 1, rng),
            conv2: Conv2d::new(store, &format!("{name}.conv2"), c, c, 3, 1, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        let y = self.conv1.forward(g, p, x);
        let y = g.relu(y);
        let y = self.conv2.forward(g, p, y);
        g.add(x, y)
    }
}

/// Residual block whose branch is rescaled per channel by a squeeze gate:
/// global average pool, bottleneck MLP, sigmoid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelAttentionBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub squeeze: Linear,
    pub excite: Linear,
}

impl ChannelAttentionBlock {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, c: usize, reduction: usize, rng: &mut ChaCha8Rng) -> Self {
        let mid = (c / reduction.max(1)).max(1);
        Self {
            conv1: Conv2d::new(store, &format!("{name}.conv1"), c, c, 3, 1, rng),
            conv2: Conv2d::new(store, &format!("{name}.conv2"), c, c, 3, 1, rng),
            squeeze: Linear::new(store, &format!("{name}.squeeze"), c, mid, rng),
            excite: Linear::new(store, &format!("{name}.excite"), mid, c, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        let y = self.conv1.forward(g, p, x);
        let y = g.relu(y);
        let y = self.conv2.forward(g, p, y);
        let s = g.global_avg_pool(y);
        let s = self.squeeze.forward(g, p, s);
        let s = g.relu(s);
        let s = self.excite.forward(g, p, s);
        let s = g.sigmoid(s);
        let y = g.scale_channels(y, s);
        g.add(x, y)
    }
}
