//! Raw forward/backward kernels behind the graph ops.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

struct ConvGeom {
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output columns `lo..hi` whose input column for tap `kx` is inside the image.
    fn valid_ox(&self, kx: usize) -> (usize, usize) {
        let lo = (self.pad.saturating_sub(kx) + self.stride - 1) / self.stride;
        let hi = if self.w + self.pad > kx { ((self.w + self.pad - kx - 1) / self.stride + 1).min(self.ow) } else { 0 };
        (lo.min(hi), hi)
    }

    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let (oh, ow) = (self.oh, self.ow);
        for c in 0..self.ci {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * oh * ow;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                        if iy < 0 || iy >= self.h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &x[(c * self.h + iy as usize) * self.w..][..self.w];
                        let (lo, hi) = self.valid_ox(kx);
                        dst[..lo].fill(T::zero());
                        dst[hi..].fill(T::zero());
                        if self.stride == 1 {
                            let off = lo + kx - self.pad;
                            dst[lo..hi].copy_from_slice(&src[off..off + hi - lo]);
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate().take(hi).skip(lo) {
                                *d = src[ox * self.stride + kx - self.pad];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Patches as rows: `rows[p * kdim + j]` is `cols[j * hw + p]`.
    fn im2row<T: Scalar>(&self, x: &[T], cols: &mut [T], rows: &mut [T]) {
        self.im2col(x, cols);
        transpose(cols, rows, self.ci * self.kh * self.kw, self.oh * self.ow);
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let (oh, ow) = (self.oh, self.ow);
        for c in 0..self.ci {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * oh * ow;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut dx[(c * self.h + iy as usize) * self.w..][..self.w];
                        let src = &cols[row + oy * ow..row + (oy + 1) * ow];
                        let (lo, hi) = self.valid_ox(kx);
                        if self.stride == 1 {
                            let off = lo + kx - self.pad;
                            dst[off..off + hi - lo].iter_mut().zip(&src[lo..hi]).for_each(|(d, s)| *d += *s);
                        } else {
                            for (ox, &s) in src.iter().enumerate().take(hi).skip(lo) {
                                dst[ox * self.stride + kx - self.pad] += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Blocked transpose of a row-major `r x c` matrix.
fn transpose<T: Scalar>(src: &[T], dst: &mut [T], r: usize, c: usize) {
    const B: usize = 32;
    for i0 in (0..r).step_by(B) {
        for j0 in (0..c).step_by(B) {
            for i in i0..(i0 + B).min(r) {
                let row = &src[i * c..];
                for j in j0..(j0 + B).min(c) {
                    dst[j * r + i] = row[j];
                }
            }
        }
    }
}

fn geometry<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> (ConvGeom, usize, usize) {
    let (n, ci, h, wd) = x.dims4();
    let (co, wci, kh, kw) = w.dims4();
    assert_eq!(ci, wci, "conv input channels {ci} vs weight {wci}");
    let g = ConvGeom {
        ci,
        h,
        w: wd,
        kh,
        kw,
        stride,
        pad,
        oh: conv_out(h, kh, stride, pad),
        ow: conv_out(wd, kw, stride, pad),
    };
    (g, n, co)
}

pub(crate) fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let (g, n, co) = geometry(x, w, stride, pad);
    let kdim = g.ci * g.kh * g.kw;
    let hw = g.oh * g.ow;
    let mut out = vec![T::zero(); n * co * hw];
    let mut cols = if g.pointwise() { Vec::new() } else { vec![T::zero(); kdim * hw] };
    for s in 0..n {
        let xs = x.sample(s);
        let colref: &[T] = if g.pointwise() {
            xs
        } else {
            g.im2col(xs, &mut cols);
            &cols
        };
        let o = &mut out[s * co * hw..(s + 1) * co * hw];
        if let Some(b) = b {
            for (c, chunk) in o.chunks_mut(hw).enumerate() {
                chunk.fill(b.data()[c]);
            }
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        T::gemm(co, kdim, hw, T::one(), w.data(), kdim as isize, 1, colref, hw as isize, 1, beta, o, hw as isize, 1);
    }
    Tensor::new(&[n, co, g.oh, g.ow], out).expect("conv output shape")
}

/// Returns `(dx, dw, db)`; `dx` only when requested.
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Tensor<T>>, Option<Tensor<T>>, Tensor<T>) {
    let (g, n, co) = geometry(x, w, stride, pad);
    let kdim = g.ci * g.kh * g.kw;
    let hw = g.oh * g.ow;
    let mut dw = vec![T::zero(); co * kdim];
    let mut db = vec![T::zero(); co];
    let mut dx = if need_dx { vec![T::zero(); x.numel()] } else { Vec::new() };
    let mut cols = if g.pointwise() { Vec::new() } else { vec![T::zero(); kdim * hw] };
    let mut rows = if need_dw && !g.pointwise() { vec![T::zero(); kdim * hw] } else { Vec::new() };
    let mut dcols = if need_dx && !g.pointwise() { vec![T::zero(); kdim * hw] } else { Vec::new() };
    let per_x = g.ci * g.h * g.w;
    for s in 0..n {
        let gys = gy.sample(s);
        for (c, chunk) in gys.chunks(hw).enumerate() {
            db[c] += chunk.iter().copied().sum::<T>();
        }
        if need_dw {
            let xs = x.sample(s);
            if g.pointwise() {
                T::gemm(co, hw, kdim, T::one(), gys, hw as isize, 1, xs, 1, hw as isize, T::one(), &mut dw, kdim as isize, 1);
            } else {
                // dW += dY (co x hw) * rows (hw x kdim); the row layout keeps
                // the long reduction axis contiguous.
                g.im2row(xs, &mut cols, &mut rows);
                T::gemm(co, hw, kdim, T::one(), gys, hw as isize, 1, &rows, kdim as isize, 1, T::one(), &mut dw, kdim as isize, 1);
            }
        }
        if need_dx {
            let dxs = &mut dx[s * per_x..(s + 1) * per_x];
            if g.pointwise() {
                T::gemm(kdim, co, hw, T::one(), w.data(), 1, kdim as isize, gys, hw as isize, 1, T::one(), dxs, hw as isize, 1);
            } else {
                T::gemm(kdim, co, hw, T::one(), w.data(), 1, kdim as isize, gys, hw as isize, 1, T::zero(), &mut dcols, hw as isize, 1);
                g.col2im(&dcols, dxs);
            }
        }
    }
    let dx = need_dx.then(|| Tensor::new(x.shape(), dx).expect("dx shape"));
    let dw = need_dw.then(|| Tensor::new(w.shape(), dw).expect("dw shape"));
    (dx, dw, Tensor::new(&[co], db).expect("db shape"))
}

pub(crate) fn upsample_nearest<T: Scalar>(x: &Tensor<T>, f: usize) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let (oh, ow) = (h * f, w * f);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in x.data().chunks(h * w) {
        for y in 0..oh {
            let row = &plane[(y / f) * w..][..w];
            for xx in 0..ow {
                out.push(row[xx / f]);
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out).expect("upsample shape")
}

pub(crate) fn upsample_nearest_backward<T: Scalar>(gy: &Tensor<T>, f: usize) -> Tensor<T> {
    let (n, c, oh, ow) = gy.dims4();
    let (h, w) = (oh / f, ow / f);
    let mut out = vec![T::zero(); n * c * h * w];
    for (plane, gp) in out.chunks_mut(h * w).zip(gy.data().chunks(oh * ow)) {
        for y in 0..oh {
            for x in 0..ow {
                plane[(y / f) * w + x / f] += gp[y * ow + x];
            }
        }
    }
    Tensor::new(&[n, c, h, w], out).expect("upsample grad shape")
}

/// Separable valid-mode correlation of every plane with `taps x taps`.
pub(crate) fn filter_valid<T: Scalar>(x: &Tensor<T>, taps: &[T]) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut tmp = vec![T::zero(); h * ow];
    for plane in x.data().chunks(h * w) {
        for y in 0..h {
            let r = &plane[y * w..(y + 1) * w];
            for xx in 0..ow {
                let mut acc = T::zero();
                for (t, v) in taps.iter().zip(&r[xx..xx + k]) {
                    acc += *t * *v;
                }
                tmp[y * ow + xx] = acc;
            }
        }
        for y in 0..oh {
            for xx in 0..ow {
                let mut acc = T::zero();
                for (i, t) in taps.iter().enumerate() {
                    acc += *t * tmp[(y + i) * ow + xx];
                }
                out.push(acc);
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out).expect("filter shape")
}

pub(crate) fn filter_valid_backward<T: Scalar>(gy: &Tensor<T>, taps: &[T], h: usize, w: usize) -> Tensor<T> {
    let (n, c, oh, ow) = gy.dims4();
    let k = taps.len();
    let mut out = vec![T::zero(); n * c * h * w];
    let mut dtmp = vec![T::zero(); h * ow];
    for (plane, gp) in out.chunks_mut(h * w).zip(gy.data().chunks(oh * ow)) {
        dtmp.fill(T::zero());
        for y in 0..oh {
            for xx in 0..ow {
                let g = gp[y * ow + xx];
                for (i, t) in taps.iter().enumerate() {
                    dtmp[(y + i) * ow + xx] += *t * g;
                }
            }
        }
        for y in 0..h {
            let r = &mut plane[y * w..(y + 1) * w];
            for xx in 0..ow {
                let g = dtmp[y * ow + xx];
                for (t, v) in taps.iter().zip(&mut r[xx..xx + k]) {
                    *v += *t * g;
                }
            }
        }
    }
    Tensor::new(&[n, c, h, w], out).expect("filter grad shape")
}

pub(crate) fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k) = a.dims2();
    let (k2, n) = b.dims2();
    assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
    let mut out = vec![T::zero(); m * n];
    T::gemm(m, k, n, T::one(), a.data(), k as isize, 1, b.data(), n as isize, 1, T::zero(), &mut out, n as isize, 1);
    Tensor::new(&[m, n], out).expect("matmul shape")
}

/// `(dA, dB)` for `C = A B` given `dC`.
pub(crate) fn matmul_backward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, g: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let (m, k) = a.dims2();
    let (_, n) = b.dims2();
    let mut da = vec![T::zero(); m * k];
    let mut db = vec![T::zero(); k * n];
    // dA = dC B^T
    T::gemm(m, n, k, T::one(), g.data(), n as isize, 1, b.data(), 1, n as isize, T::zero(), &mut da, k as isize, 1);
    // dB = A^T dC
    T::gemm(k, m, n, T::one(), a.data(), 1, k as isize, g.data(), n as isize, 1, T::zero(), &mut db, n as isize, 1);
    (Tensor::new(&[m, k], da).unwrap(), Tensor::new(&[k, n], db).unwrap())
}
