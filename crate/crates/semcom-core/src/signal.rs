//! The unit transmitted by the system: an image tensor with entries in [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Image dimensions, stored channel-major (planes of H×W).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl SignalShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        SignalShape {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for SignalShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// An image sample with every entry in the closed interval [0, 1].
///
/// Storage is CHW: channel planes, each row-major H×W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal<T> {
    shape: SignalShape,
    data: Vec<T>,
}

impl<T: Scalar> Signal<T> {
    /// Validates range and length. Rejects entries outside [0, 1].
    pub fn new(shape: SignalShape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(CoreError::Config(format!(
                "signal data length {} does not match shape {}",
                data.len(),
                shape
            )));
        }
        if data.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(CoreError::Config("signal entries must lie in [0,1]".into()));
        }
        Ok(Signal { shape, data })
    }

    /// Builds a signal by clamping arbitrary values into [0, 1].
    pub fn from_clamped(shape: SignalShape, mut data: Vec<T>) -> Self {
        assert_eq!(data.len(), shape.len(), "signal data length mismatch");
        for v in &mut data {
            *v = v.max(T::zero()).min(T::one());
        }
        Signal { shape, data }
    }

    pub fn zeros(shape: SignalShape) -> Self {
        Signal {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn shape(&self) -> SignalShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn cast<U: Scalar>(&self) -> Signal<U> {
        Signal {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_entries() {
        let shape = SignalShape::new(1, 2, 1);
        assert!(Signal::new(shape, vec![0.0f64, 1.1]).is_err());
        assert!(Signal::new(shape, vec![-0.1f64, 0.5]).is_err());
        assert!(Signal::new(shape, vec![0.0f64, 1.0]).is_ok());
    }

    #[test]
    fn clamping_constructor_projects() {
        let shape = SignalShape::new(1, 3, 1);
        let s = Signal::from_clamped(shape, vec![-0.5f64, 0.25, 2.0]);
        assert_eq!(s.data(), &[0.0, 0.25, 1.0]);
    }
}
