use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init_uniform, kaiming_bound};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fully connected layer, weights stored row-major [out, in].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear<T> {
    pub w: Tensor<T>,
    pub b: Vec<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone)]
pub struct LinearGrads<T> {
    pub dw: Tensor<T>,
    pub db: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut w = Tensor::zeros(&[out_dim, in_dim]);
        let bound = kaiming_bound::<T>(in_dim);
        init_uniform(w.data_mut(), bound, rng);
        let mut b = vec![T::zero(); out_dim];
        init_uniform(&mut b, bound, rng);
        Linear {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn zero_grads(&self) -> LinearGrads<T> {
        LinearGrads {
            dw: Tensor::zeros(&[self.out_dim, self.in_dim]),
            db: vec![T::zero(); self.out_dim],
        }
    }

    pub fn forward(&self, x: &[T], out: &mut Vec<T>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        out.extend_from_slice(&self.b);
        T::gemm(self.out_dim, self.in_dim, 1, T::one(), self.w.data(), x, T::one(), out);
    }

    /// Accumulates parameter grads and writes dL/dx.
    pub fn backward(&self, x: &[T], dy: &[T], grads: &mut LinearGrads<T>, dx: &mut Vec<T>) {
        // dW += dy (out×1) · xᵀ (1×in)
        T::gemm(self.out_dim, 1, self.in_dim, T::one(), dy, x, T::one(), grads.dw.data_mut());
        for (g, &d) in grads.db.iter_mut().zip(dy) {
            *g += d;
        }
        dx.clear();
        dx.resize(self.in_dim, T::zero());
        // dx = Wᵀ · dy : accumulate row-wise to keep it cache-friendly
        for o in 0..self.out_dim {
            let row = &self.w.data()[o * self.in_dim..(o + 1) * self.in_dim];
            let d = dy[o];
            if d != T::zero() {
                for (dst, &wv) in dx.iter_mut().zip(row) {
                    *dst += wv * d;
                }
            }
        }
    }
}

impl<T: Scalar> LinearGrads<T> {
    pub fn add_assign(&mut self, other: &LinearGrads<T>) {
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
