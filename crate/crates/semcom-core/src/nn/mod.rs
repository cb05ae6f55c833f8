//! Hand-rolled neural layers with explicit forward/backward passes.
//!
//! Layers cache whatever their backward pass needs; batches are processed
//! one sample at a time (forward immediately followed by backward), with
//! gradient accumulation into mirror structs. Everything here is checked
//! against central finite differences in the test suites.

mod adam;
mod conv;
mod linear;
mod unet;

pub use adam::Adam;
pub use conv::{col2im, im2col, Conv2d, Conv2dGrads, ConvT2d, ConvT2dGrads};
pub use linear::{Linear, LinearGrads};
pub use unet::{AttentionUnet, AttentionUnetGrads, UnetCache, UnetConfig};

use crate::scalar::Scalar;

/// ReLU in place; returns nothing, mask is recoverable from the output.
pub fn relu_inplace<T: Scalar>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// dL/dx given dL/dy and the *output* y of a ReLU.
pub fn relu_backward<T: Scalar>(dy: &mut [T], y: &[T]) {
    for (g, &o) in dy.iter_mut().zip(y) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn sigmoid_inplace<T: Scalar>(x: &mut [T]) {
    for v in x.iter_mut() {
        *v = T::one() / (T::one() + (-*v).exp());
    }
}

/// dL/dx given dL/dy and the output y = sigmoid(x).
pub fn sigmoid_backward<T: Scalar>(dy: &mut [T], y: &[T]) {
    for (g, &o) in dy.iter_mut().zip(y) {
        *g = *g * o * (T::one() - o);
    }
}

pub fn tanh_inplace<T: Scalar>(x: &mut [T]) {
    for v in x.iter_mut() {
        *v = v.tanh();
    }
}

/// dL/dx given dL/dy and the output y = tanh(x).
pub fn tanh_backward<T: Scalar>(dy: &mut [T], y: &[T]) {
    for (g, &o) in dy.iter_mut().zip(y) {
        *g = *g * (T::one() - o * o);
    }
}

/// Kaiming-uniform initialisation bound for a layer with the given fan-in.
pub(crate) fn kaiming_bound<T: Scalar>(fan_in: usize) -> T {
    T::from_f64((6.0 / fan_in as f64).sqrt())
}

pub(crate) fn init_uniform<T: Scalar, R: rand::Rng>(data: &mut [T], bound: T, rng: &mut R) {
    for v in data.iter_mut() {
        let u: f64 = rng.gen::<f64>() * 2.0 - 1.0;
        *v = bound * T::from_f64(u);
    }
}
