use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::graph::{Gradients, Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    /// Uniform in `±1/sqrt(fan_in)`.
    pub fn add_fan_in(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..shape.iter().product::<usize>()).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
        self.add(name, Tensor::new(shape, data).expect("param shape"))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.names.iter().zip(&self.tensors).enumerate().map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Registers every parameter as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        Bound(self.tensors.iter().map(|t| g.leaf(t.clone(), true)).collect())
    }

    /// Registers every parameter as a constant.
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Bound {
        Bound(self.tensors.iter().map(|t| g.leaf(t.clone(), false)).collect())
    }

    /// Replaces values from another store with identical names and shapes.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        if self.names != other.names {
            return Err(NnError::Checkpoint("parameter names differ from the model layout".into()));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(NnError::Checkpoint(format!("shape {:?} vs {:?}", a.shape(), b.shape())));
            }
            *a = b.clone();
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }
}

/// Graph handles for a bound [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    /// Parameter gradients in store order; untouched parameters get `None`.
    pub fn grads<'a, T: Scalar>(&self, grads: &'a Gradients<T>) -> Vec<Option<&'a Tensor<T>>> {
        self.0.iter().map(|v| grads.wrt(*v)).collect()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, lr: f64) -> Self {
        let zeros: Vec<Tensor<T>> = store.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Option<&Tensor<T>>]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (ob1, ob2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let step = T::of(self.lr / c1);
        let inv_c2 = T::of(1.0 / c2);
        let eps = T::of(self.eps);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            let p = store.tensors[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = b1 * m[j] + ob1 * gj;
                v[j] = b2 * v[j] + ob2 * gj * gj;
                p[j] -= step * m[j] / ((v[j] * inv_c2).sqrt() + eps);
            }
        }
    }
}
