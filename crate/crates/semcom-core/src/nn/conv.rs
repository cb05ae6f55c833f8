use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init_uniform, kaiming_bound};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Unfolds `input` (CHW) into columns indexed [(c,kh,kw), (oh,ow)] where
/// column (oh,ow) reads input[c, oh*stride + kh - pad, ow*stride + kw - pad],
/// zero outside the image.
pub fn im2col<T: Scalar>(
    input: &[T],
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    cols: &mut Vec<T>,
) -> (usize, usize) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let span = oh * ow;
    cols.clear();
    cols.resize(channels * k * k * span, T::zero());
    for c in 0..channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for kh in 0..k {
            for kw in 0..k {
                let row = &mut cols[((c * k + kh) * k + kw) * span..((c * k + kh) * k + kw + 1) * span];
                for oy in 0..oh {
                    let iy = (oy * stride + kh) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst_row = &mut row[oy * ow..(oy + 1) * ow];
                    for ox in 0..ow {
                        let ix = (ox * stride + kw) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    (oh, ow)
}

/// Adjoint of [`im2col`]: scatter-adds columns back into an image of the
/// given dimensions. `out` must be pre-sized to channels*h*w.
pub fn col2im<T: Scalar>(
    cols: &[T],
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    out: &mut [T],
) {
    debug_assert_eq!(out.len(), channels * h * w);
    let span = oh * ow;
    for c in 0..channels {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for kh in 0..k {
            for kw in 0..k {
                let row = &cols[((c * k + kh) * k + kw) * span..((c * k + kh) * k + kw + 1) * span];
                for oy in 0..oh {
                    let iy = (oy * stride + kh) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src_row = &row[oy * ow..(oy + 1) * ow];
                    for ox in 0..ow {
                        let ix = (ox * stride + kw) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += src_row[ox];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution, weights [oc, ic*k*k].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv2d<T> {
    pub w: Tensor<T>,
    pub b: Vec<T>,
    pub ic: usize,
    pub oc: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads<T> {
    pub dw: Tensor<T>,
    pub db: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng>(ic: usize, oc: usize, k: usize, stride: usize, pad: usize, rng: &mut R) -> Self {
        let mut w = Tensor::zeros(&[oc, ic * k * k]);
        let bound = kaiming_bound::<T>(ic * k * k);
        init_uniform(w.data_mut(), bound, rng);
        let mut b = vec![T::zero(); oc];
        init_uniform(&mut b, bound, rng);
        Conv2d {
            w,
            b,
            ic,
            oc,
            k,
            stride,
            pad,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    pub fn zero_grads(&self) -> Conv2dGrads<T> {
        Conv2dGrads {
            dw: Tensor::zeros(&[self.oc, self.ic * self.k * self.k]),
            db: vec![T::zero(); self.oc],
        }
    }

    /// Writes output [oc, oh*ow]; `cols` is scratch reused across calls.
    pub fn forward(&self, x: &[T], h: usize, w: usize, cols: &mut Vec<T>, out: &mut Vec<T>) -> (usize, usize) {
        let (oh, ow) = im2col(x, self.ic, h, w, self.k, self.stride, self.pad, cols);
        let span = oh * ow;
        out.clear();
        out.resize(self.oc * span, T::zero());
        for (o, &bias) in self.b.iter().enumerate() {
            out[o * span..(o + 1) * span].iter_mut().for_each(|v| *v = bias);
        }
        T::gemm(self.oc, self.ic * self.k * self.k, span, T::one(), self.w.data(), cols, T::one(), out);
        (oh, ow)
    }

    /// Accumulates grads and writes dL/dx. `cols` must hold the forward
    /// im2col of `x`; `dcols` is scratch.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        cols: &[T],
        dy: &[T],
        h: usize,
        w: usize,
        oh: usize,
        ow: usize,
        grads: &mut Conv2dGrads<T>,
        dcols: &mut Vec<T>,
        dx: &mut Vec<T>,
    ) {
        let span = oh * ow;
        let kk = self.ic * self.k * self.k;
        // dW += dy (oc×span) · colsᵀ (span×kk)
        // gemm with B transposed: emulate by swapping strides is not exposed,
        // so compute via explicit transpose-free loop through gemm on cols·dyᵀ?
        // matrixmultiply supports arbitrary strides; use rsb/csb swapped.
        gemm_nt(self.oc, span, kk, dy, cols, grads.dw.data_mut());
        for (o, g) in grads.db.iter_mut().enumerate() {
            let mut s = T::zero();
            for &v in &dy[o * span..(o + 1) * span] {
                s += v;
            }
            *g += s;
        }
        // dcols = Wᵀ (kk×oc) · dy (oc×span)
        dcols.clear();
        dcols.resize(kk * span, T::zero());
        gemm_tn(kk, self.oc, span, self.w.data(), dy, dcols);
        dx.clear();
        dx.resize(self.ic * h * w, T::zero());
        col2im(dcols, self.ic, h, w, self.k, self.stride, self.pad, oh, ow, dx);
    }
}

impl<T: Scalar> Conv2dGrads<T> {
    pub fn add_assign(&mut self, other: &Conv2dGrads<T>) {
        self.dw.add_scaled(&other.dw, T::one());
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.dw.data_mut().iter_mut().for_each(|v| *v *= s);
        self.db.iter_mut().for_each(|v| *v *= s);
    }
}

/// C(m×n) += A(m×k) · B(k×n), all row-major.
fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    T::gemm(m, k, n, T::one(), a, b, T::one(), c);
}

/// C(m×n) += A(m×k) · Bᵀ where B is stored row-major n×k.
fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b_t: &[T], c: &mut [T]) {
    T::gemm_strided(m, k, n, T::one(), a, k as isize, 1, b_t, 1, k as isize, T::one(), c);
}

/// C(m×n) += Aᵀ · B where A is stored row-major k×m.
fn gemm_tn<T: Scalar>(m: usize, k: usize, n: usize, a_t: &[T], b: &[T], c: &mut [T]) {
    T::gemm_strided(m, k, n, T::one(), a_t, 1, m as isize, b, n as isize, 1, T::one(), c);
}

/// Transposed 2-D convolution (fractionally strided). Weights [ic, oc*k*k].
/// Output size: (ih-1)*stride + k - 2*pad.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvT2d<T> {
    pub w: Tensor<T>,
    pub b: Vec<T>,
    pub ic: usize,
    pub oc: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone)]
pub struct ConvT2dGrads<T> {
    pub dw: Tensor<T>,
    pub db: Vec<T>,
}

impl<T: Scalar> ConvT2d<T> {
    pub fn new<R: Rng>(ic: usize, oc: usize, k: usize, stride: usize, pad: usize, rng: &mut R) -> Self {
        let mut w = Tensor::zeros(&[ic, oc * k * k]);
        let bound = kaiming_bound::<T>(ic * k * k);
        init_uniform(w.data_mut(), bound, rng);
        let mut b = vec![T::zero(); oc];
        init_uniform(&mut b, bound, rng);
        ConvT2d {
            w,
            b,
            ic,
            oc,
            k,
            stride,
            pad,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h - 1) * self.stride + self.k - 2 * self.pad,
            (w - 1) * self.stride + self.k - 2 * self.pad,
        )
    }

    pub fn zero_grads(&self) -> ConvT2dGrads<T> {
        ConvT2dGrads {
            dw: Tensor::zeros(&[self.ic, self.oc * self.k * self.k]),
            db: vec![T::zero(); self.oc],
        }
    }

    /// Writes output [oc, oh*ow]; `cols` is scratch.
    pub fn forward(&self, x: &[T], h: usize, w: usize, cols: &mut Vec<T>, out: &mut Vec<T>) -> (usize, usize) {
        let (oh, ow) = self.out_hw(h, w);
        let span = h * w;
        let kk = self.oc * self.k * self.k;
        // cols (kk × span) = Wᵀ (kk×ic) · x (ic×span)
        cols.clear();
        cols.resize(kk * span, T::zero());
        gemm_tn(kk, self.ic, span, self.w.data(), x, cols);
        out.clear();
        out.resize(self.oc * oh * ow, T::zero());
        col2im(cols, self.oc, oh, ow, self.k, self.stride, self.pad, h, w, out);
        for (o, &bias) in self.b.iter().enumerate() {
            out[o * oh * ow..(o + 1) * oh * ow].iter_mut().for_each(|v| *v += bias);
        }
        (oh, ow)
    }

    /// Accumulates grads and writes dL/dx.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        x: &[T],
        dy: &[T],
        h: usize,
        w: usize,
        grads: &mut ConvT2dGrads<T>,
        dcols: &mut Vec<T>,
        dx: &mut Vec<T>,
    ) {
        let (oh, ow) = self.out_hw(h, w);
        let span = h * w;
        // dcols [(oc,kh,kw), (ih,iw)] = gathered dout
        im2col(dy, self.oc, oh, ow, self.k, self.stride, self.pad, dcols);
        // dx (ic×span) = W (ic×kk) · dcols (kk×span)
        dx.clear();
        dx.resize(self.ic * span, T::zero());
        gemm_nn(self.ic, self.oc * self.k * self.k, span, self.w.data(), dcols, dx);
        // dW (ic×kk) += x (ic×span) · dcolsᵀ (span×kk)
        gemm_nt(self.ic, span, self.oc * self.k * self.k, x, dcols, grads.dw.data_mut());
        for (o, g) in grads.db.iter_mut().enumerate() {
            let mut s = T::zero();
            for &v in &dy[o * oh * ow..(o + 1) * oh * ow] {
                s += v;
            }
            *g += s;
        }
    }
}

impl<T: Scalar> ConvT2dGrads<T> {
    pub fn add_assign(&mut self, other: &ConvT2dGrads<T>) {
        self.dw.add_scaled(&other.dw, T::one());
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.dw.data_mut().iter_mut().for_each(|v| *v *= s);
        self.db.iter_mut().for_each(|v| *v *= s);
    }
}
