//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every op eagerly, holding each intermediate value.
//! [`Graph::backward`] walks the tape in reverse and returns gradients for
//! every node that depends on a differentiable leaf.

use crate::kernels;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    Upsample { x: Var, factor: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    GlobalAvgPool(Var),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Reshape(Var),
    StraightThrough(Var),
    AddBias(Var, Var),
    ScaleChannels(Var, Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    SoftmaxRows(Var),
    Gather { table: Var, idx: Vec<usize> },
    NchwToRows(Var),
    RowsToNchw(Var),
    FilterValid { x: Var, taps: Vec<T> },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A leaf. Gradients are tracked only when `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Same value, no gradient flows back through it.
    pub fn stop_gradient(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.input(value)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let out = kernels::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), stride, pad);
        let mut ins = vec![x, w];
        ins.extend(b);
        self.push(out, Op::Conv2d { x, w, b, stride, pad }, &ins)
    }

    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Var {
        let out = kernels::upsample_nearest(self.value(x), factor);
        self.push(out, Op::Upsample { x, factor }, &[x])
    }

    fn binary(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise op on {:?} and {:?}", va.shape(), vb.shape());
        let out = va.zip_map(vb, f);
        self.push(out, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|v| v + c);
        self.push(out, Op::AddScalar(a), &[a])
    }

    pub fn mul_scalar(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|v| v * c);
        self.push(out, Op::MulScalar(a, c), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(T::zero()));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| T::one() / (T::one() + (-v).exp()));
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.ln());
        self.push(out, Op::Log(a), &[a])
    }

    /// `[N, C, H, W] -> [N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let inv = T::of(1.0 / (h * w) as f64);
        let data = self.value(x).data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        let out = Tensor::new(&[n, c], data).unwrap();
        self.push(out, Op::GlobalAvgPool(x), &[x])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = kernels::matmul(self.value(a), self.value(b));
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    /// `a b^T` for `a[M, K]`, `b[N, K]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.value(a).dims2();
        let (n, k2) = self.value(b).dims2();
        assert_eq!(k, k2, "matmul_nt inner dims {k} vs {k2}");
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, T::one(), self.value(a).data(), k as isize, 1, self.value(b).data(), 1, k as isize, T::zero(), &mut out, n as isize, 1);
        let out = Tensor::new(&[m, n], out).unwrap();
        self.push(out, Op::MatMulNT(a, b), &[a, b])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let out = self.value(a).clone().reshaped(shape).expect("reshape element count");
        self.push(out, Op::Reshape(a), &[a])
    }

    /// Takes the value `forward` but passes gradients to `x` unchanged.
    /// `forward` must have the shape of `x`.
    pub fn straight_through(&mut self, x: Var, forward: Tensor<T>) -> Var {
        assert_eq!(self.value(x).shape(), forward.shape());
        self.push(forward, Op::StraightThrough(x), &[x])
    }

    /// `[M, N] + bias[N]` broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (_, n) = self.value(a).dims2();
        let b = self.value(bias).data().to_vec();
        assert_eq!(b.len(), n);
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(n) {
            row.iter_mut().zip(&b).for_each(|(v, bb)| *v += *bb);
        }
        self.push(out, Op::AddBias(a, bias), &[a, bias])
    }

    /// `x[N, C, H, W] * s[N, C]` broadcast over space.
    pub fn scale_channels(&mut self, x: Var, s: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(self.value(s).shape(), &[n, c]);
        let scales = self.value(s).data().to_vec();
        let mut out = self.value(x).clone();
        for (plane, sc) in out.data_mut().chunks_mut(h * w).zip(scales) {
            plane.iter_mut().for_each(|v| *v *= sc);
        }
        self.push(out, Op::ScaleChannels(x, s), &[x, s])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = T::of(self.value(a).sum_f64());
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Mean of all elements, accumulated in `f64`.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = T::of(v.sum_f64() / v.numel() as f64);
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// `[M, N] -> [N]`, averaging over rows.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.value(a).dims2();
        let mut acc = vec![0.0f64; n];
        for row in self.value(a).data().chunks(n) {
            acc.iter_mut().zip(row).for_each(|(s, v)| *s += v.as_f64());
        }
        let out = Tensor::new(&[n], acc.into_iter().map(|s| T::of(s / m as f64)).collect()).unwrap();
        self.push(out, Op::MeanRows(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (_, n) = self.value(a).dims2();
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(n) {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v = *v / z);
        }
        self.push(out, Op::SoftmaxRows(a), &[a])
    }

    /// Rows of `table[K, D]` selected by `idx`, giving `[idx.len(), D]`.
    pub fn gather_rows(&mut self, table: Var, idx: Vec<usize>) -> Var {
        let (_, d) = self.value(table).dims2();
        let t = self.value(table).data();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in &idx {
            data.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let out = Tensor::new(&[idx.len(), d], data).unwrap();
        self.push(out, Op::Gather { table, idx }, &[table])
    }

    /// `[N, C, H, W] -> [N*H*W, C]`, one row per spatial position.
    pub fn nchw_to_rows(&mut self, x: Var) -> Var {
        let out = nchw_to_rows(self.value(x));
        self.push(out, Op::NchwToRows(x), &[x])
    }

    pub fn rows_to_nchw(&mut self, x: Var, n: usize, h: usize, w: usize) -> Var {
        let out = rows_to_nchw(self.value(x), n, h, w);
        self.push(out, Op::RowsToNchw(x), &[x])
    }

    /// Valid-mode separable filter with fixed `taps` on every plane.
    pub fn filter_valid(&mut self, x: Var, taps: Vec<T>) -> Var {
        let out = kernels::filter_valid(self.value(x), &taps);
        self.push(out, Op::FilterValid { x, taps }, &[x])
    }

    /// Gradients of the scalar `loss` with respect to every tracked node.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).numel(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn backprop_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let mut acc = |v: Var, t: Tensor<T>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let ng = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, stride, pad } => {
                let (dx, dw, db) =
                    kernels::conv2d_backward(val(*x), val(*w), g, *stride, *pad, ng(*x), ng(*w));
                if let Some(dx) = dx {
                    acc(*x, dx);
                }
                if let Some(dw) = dw {
                    acc(*w, dw);
                }
                if let Some(b) = b {
                    acc(*b, db);
                }
            }
            Op::Upsample { x, factor } => acc(*x, kernels::upsample_nearest_backward(g, *factor)),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if ng(*a) {
                    acc(*a, g.zip_map(val(*b), |g, y| g * y));
                }
                if ng(*b) {
                    acc(*b, g.zip_map(val(*a), |g, x| g * x));
                }
            }
            Op::Div(a, b) => {
                if ng(*a) {
                    acc(*a, g.zip_map(val(*b), |g, y| g / y));
                }
                if ng(*b) {
                    // d(a/b)/db = -(a/b)/b
                    let q = node.value.zip_map(val(*b), |q, y| q / y);
                    acc(*b, g.zip_map(&q, |g, q| -g * q));
                }
            }
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::MulScalar(a, c) => {
                let c = *c;
                acc(*a, g.map(|v| v * c));
            }
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |g, x| if x > T::zero() { g } else { T::zero() })),
            Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |g, s| g * s * (T::one() - s))),
            Op::Log(a) => acc(*a, g.zip_map(val(*a), |g, x| g / x)),
            Op::GlobalAvgPool(x) => {
                let (n, c, h, w) = val(*x).dims4();
                let inv = T::of(1.0 / (h * w) as f64);
                let mut out = Vec::with_capacity(n * c * h * w);
                for &gv in g.data() {
                    out.extend(std::iter::repeat(gv * inv).take(h * w));
                }
                acc(*x, Tensor::new(&[n, c, h, w], out).unwrap());
            }
            Op::MatMul(a, b) => {
                let (da, db) = kernels::matmul_backward(val(*a), val(*b), g);
                acc(*a, da);
                acc(*b, db);
            }
            Op::MatMulNT(a, b) => {
                let (m, k) = val(*a).dims2();
                let (n, _) = val(*b).dims2();
                if ng(*a) {
                    // dA = dC B
                    let mut da = vec![T::zero(); m * k];
                    T::gemm(m, n, k, T::one(), g.data(), n as isize, 1, val(*b).data(), k as isize, 1, T::zero(), &mut da, k as isize, 1);
                    acc(*a, Tensor::new(&[m, k], da).unwrap());
                }
                if ng(*b) {
                    // dB = dC^T A
                    let mut db = vec![T::zero(); n * k];
                    T::gemm(n, m, k, T::one(), g.data(), 1, n as isize, val(*a).data(), k as isize, 1, T::zero(), &mut db, k as isize, 1);
                    acc(*b, Tensor::new(&[n, k], db).unwrap());
                }
            }
            Op::Reshape(a) => acc(*a, g.clone().reshaped(val(*a).shape()).unwrap()),
            Op::StraightThrough(x) => acc(*x, g.clone()),
            Op::AddBias(a, bias) => {
                acc(*a, g.clone());
                if ng(*bias) {
                    let n = val(*bias).numel();
                    let mut db = vec![T::zero(); n];
                    for row in g.data().chunks(n) {
                        db.iter_mut().zip(row).for_each(|(s, v)| *s += *v);
                    }
                    acc(*bias, Tensor::new(&[n], db).unwrap());
                }
            }
            Op::ScaleChannels(x, s) => {
                let (_, _, h, w) = val(*x).dims4();
                if ng(*x) {
                    let mut dx = g.clone();
                    for (plane, sc) in dx.data_mut().chunks_mut(h * w).zip(val(*s).data()) {
                        plane.iter_mut().for_each(|v| *v *= *sc);
                    }
                    acc(*x, dx);
                }
                if ng(*s) {
                    let ds: Vec<T> = g
                        .data()
                        .chunks(h * w)
                        .zip(val(*x).data().chunks(h * w))
                        .map(|(gp, xp)| gp.iter().zip(xp).map(|(a, b)| *a * *b).sum())
                        .collect();
                    acc(*s, Tensor::new(val(*s).shape(), ds).unwrap());
                }
            }
            Op::Sum(a) => acc(*a, Tensor::full(val(*a).shape(), g.item())),
            Op::Mean(a) => {
                let n = val(*a).numel();
                acc(*a, Tensor::full(val(*a).shape(), g.item() / T::of(n as f64)));
            }
            Op::MeanRows(a) => {
                let (m, n) = val(*a).dims2();
                let inv = T::of(1.0 / m as f64);
                let row: Vec<T> = g.data().iter().map(|v| *v * inv).collect();
                let data = row.iter().copied().cycle().take(m * n).collect();
                acc(*a, Tensor::new(&[m, n], data).unwrap());
            }
            Op::SoftmaxRows(a) => {
                let (_, n) = val(*a).dims2();
                let mut dx = Vec::with_capacity(node.value.numel());
                for (y, gr) in node.value.data().chunks(n).zip(g.data().chunks(n)) {
                    let dot: T = y.iter().zip(gr).map(|(a, b)| *a * *b).sum();
                    dx.extend(y.iter().zip(gr).map(|(y, g)| *y * (*g - dot)));
                }
                acc(*a, Tensor::new(val(*a).shape(), dx).unwrap());
            }
            Op::Gather { table, idx } => {
                let (k, d) = val(*table).dims2();
                let mut dt = vec![T::zero(); k * d];
                for (r, &i) in idx.iter().enumerate() {
                    let src = &g.data()[r * d..(r + 1) * d];
                    dt[i * d..(i + 1) * d].iter_mut().zip(src).for_each(|(a, b)| *a += *b);
                }
                acc(*table, Tensor::new(&[k, d], dt).unwrap());
            }
            Op::NchwToRows(x) => {
                let (n, _, h, w) = val(*x).dims4();
                acc(*x, rows_to_nchw(g, n, h, w));
            }
            Op::RowsToNchw(x) => acc(*x, nchw_to_rows(g)),
            Op::FilterValid { x, taps } => {
                let (_, _, h, w) = val(*x).dims4();
                acc(*x, kernels::filter_valid_backward(g, taps, h, w));
            }
        }
    }
}

fn nchw_to_rows<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let hw = h * w;
    let mut out = vec![T::zero(); n * hw * c];
    for s in 0..n {
        let xs = x.sample(s);
        for ch in 0..c {
            for p in 0..hw {
                out[(s * hw + p) * c + ch] = xs[ch * hw + p];
            }
        }
    }
    Tensor::new(&[n * hw, c], out).unwrap()
}

fn rows_to_nchw<T: Scalar>(x: &Tensor<T>, n: usize, h: usize, w: usize) -> Tensor<T> {
    let (rows, c) = x.dims2();
    assert_eq!(rows, n * h * w);
    let hw = h * w;
    let mut out = vec![T::zero(); n * c * hw];
    for s in 0..n {
        for p in 0..hw {
            for ch in 0..c {
                out[(s * c + ch) * hw + p] = x.data()[(s * hw + p) * c + ch];
            }
        }
    }
    Tensor::new(&[n, c, h, w], out).unwrap()
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`, if `v` is tracked and
    /// reachable from the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}
