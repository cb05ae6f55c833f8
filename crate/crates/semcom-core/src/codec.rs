//! The joint source-channel codec: convolutional encoder to a latent
//! semantic vector, mirrored transposed-convolution decoder with sigmoid
//! output. Channel protection is learned end to end; there is no separate
//! error-correction code.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{awgn_transmit, power_normalize, ChannelConfig};
use crate::error::{CoreError, Result};
use crate::nn::{
    relu_backward, relu_inplace, sigmoid_backward, sigmoid_inplace, Conv2d, Conv2dGrads, ConvT2d,
    ConvT2dGrads, Linear, LinearGrads,
};
use crate::scalar::Scalar;
use crate::signal::{Signal, SignalShape};

/// Architecture descriptor: enough to rebuild the network shape exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecArch {
    pub input: SignalShape,
    /// Channel width of the first two conv blocks.
    pub width1: usize,
    /// Channel width of the deepest conv block.
    pub width2: usize,
    /// Latent dimension d_s of the semantic vector.
    pub latent_dim: usize,
}

impl CodecArch {
    /// Derives the latent size from the compressed-fraction form of the
    /// compression rate (e.g. 0.25 for the "1/4" setting).
    pub fn for_shape(input: SignalShape, cr_fraction: f64, width1: usize, width2: usize) -> Result<Self> {
        if !(cr_fraction > 0.0 && cr_fraction <= 1.0) {
            return Err(CoreError::Config(format!(
                "compression fraction must be in (0,1], got {cr_fraction}"
            )));
        }
        if input.height % 4 != 0 || input.width % 4 != 0 {
            return Err(CoreError::Config(format!(
                "codec needs spatial dims divisible by 4, got {input}"
            )));
        }
        let latent_dim = ((input.len() as f64 * cr_fraction).round() as usize).max(1);
        Ok(CodecArch {
            input,
            width1,
            width2,
            latent_dim,
        })
    }

    fn deep_hw(&self) -> (usize, usize) {
        (self.input.height / 4, self.input.width / 4)
    }

    fn deep_len(&self) -> usize {
        let (h, w) = self.deep_hw();
        self.width2 * h * w
    }
}

/// Training provenance carried inside checkpoints.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_trained: usize,
    pub seed: u64,
    pub train_snr_db: f64,
}

/// Encoder + decoder parameters plus the architecture descriptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Codec<T> {
    pub arch: CodecArch,
    pub meta: TrainMeta,
    enc_c1: Conv2d<T>,
    enc_c2: Conv2d<T>,
    enc_c3: Conv2d<T>,
    enc_fc: Linear<T>,
    dec_fc: Linear<T>,
    dec_t1: ConvT2d<T>,
    dec_t2: ConvT2d<T>,
    dec_head: Conv2d<T>,
}

#[derive(Debug, Clone)]
pub struct CodecGrads<T> {
    pub enc_c1: Conv2dGrads<T>,
    pub enc_c2: Conv2dGrads<T>,
    pub enc_c3: Conv2dGrads<T>,
    pub enc_fc: LinearGrads<T>,
    pub dec_fc: LinearGrads<T>,
    pub dec_t1: ConvT2dGrads<T>,
    pub dec_t2: ConvT2dGrads<T>,
    pub dec_head: Conv2dGrads<T>,
}

/// Per-sample activations for one encoder pass.
#[derive(Debug, Default, Clone)]
pub struct EncCache<T> {
    x: Vec<T>,
    a1: Vec<T>,
    a1_cols: Vec<T>,
    a2: Vec<T>,
    a2_cols: Vec<T>,
    a3: Vec<T>,
    a3_cols: Vec<T>,
}

/// Per-sample activations for one decoder pass.
#[derive(Debug, Default, Clone)]
pub struct DecCache<T> {
    z: Vec<T>,
    d0: Vec<T>,
    d1: Vec<T>,
    d2: Vec<T>,
    d2_cols: Vec<T>,
    out: Vec<T>,
}

/// Reusable scratch for inference-only transmission.
#[derive(Debug, Default, Clone)]
pub struct CodecScratch<T> {
    enc: EncCache<T>,
    dec: DecCache<T>,
    cols: Vec<T>,
}

impl<T: Scalar> Codec<T> {
    pub fn new<R: Rng>(arch: CodecArch, rng: &mut R) -> Self {
        let c = arch.input.channels;
        let (w1, w2) = (arch.width1, arch.width2);
        Codec {
            arch,
            meta: TrainMeta::default(),
            enc_c1: Conv2d::new(c, w1, 3, 1, 1, rng),
            enc_c2: Conv2d::new(w1, w1, 3, 2, 1, rng),
            enc_c3: Conv2d::new(w1, w2, 3, 2, 1, rng),
            enc_fc: Linear::new(arch.deep_len(), arch.latent_dim, rng),
            dec_fc: Linear::new(arch.latent_dim, arch.deep_len(), rng),
            dec_t1: ConvT2d::new(w2, w1, 2, 2, 0, rng),
            dec_t2: ConvT2d::new(w1, w1, 2, 2, 0, rng),
            dec_head: Conv2d::new(w1, c, 3, 1, 1, rng),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn param_count(&self) -> usize {
        self.grad_template().grad_slices().iter().map(|s| s.len()).sum::<usize>()
    }

    fn grad_template(&self) -> CodecGrads<T> {
        self.zero_grads()
    }

    pub fn zero_grads(&self) -> CodecGrads<T> {
        CodecGrads {
            enc_c1: self.enc_c1.zero_grads(),
            enc_c2: self.enc_c2.zero_grads(),
            enc_c3: self.enc_c3.zero_grads(),
            enc_fc: self.enc_fc.zero_grads(),
            dec_fc: self.dec_fc.zero_grads(),
            dec_t1: self.dec_t1.zero_grads(),
            dec_t2: self.dec_t2.zero_grads(),
            dec_head: self.dec_head.zero_grads(),
        }
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.enc_c1.w.data_mut(),
            &mut self.enc_c1.b,
            self.enc_c2.w.data_mut(),
            &mut self.enc_c2.b,
            self.enc_c3.w.data_mut(),
            &mut self.enc_c3.b,
            self.enc_fc.w.data_mut(),
            &mut self.enc_fc.b,
            self.dec_fc.w.data_mut(),
            &mut self.dec_fc.b,
            self.dec_t1.w.data_mut(),
            &mut self.dec_t1.b,
            self.dec_t2.w.data_mut(),
            &mut self.dec_t2.b,
            self.dec_head.w.data_mut(),
            &mut self.dec_head.b,
        ]
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.arch.input.len() {
            return Err(CoreError::Config(format!(
                "input length {len} does not match codec input shape {}",
                self.arch.input
            )));
        }
        Ok(())
    }

    /// Encoder forward on raw CHW data; fills the cache for backward.
    pub fn encode_raw(&self, x: &[T], cache: &mut EncCache<T>) -> Result<Vec<T>> {
        self.check_input(x.len())?;
        let (h, w) = (self.arch.input.height, self.arch.input.width);
        cache.x.clear();
        cache.x.extend_from_slice(x);
        let mut a1 = Vec::new();
        self.enc_c1.forward(x, h, w, &mut cache.a1_cols, &mut a1);
        relu_inplace(&mut a1);
        let mut a2 = Vec::new();
        let (h2, w2) = self.enc_c2.forward(&a1, h, w, &mut cache.a2_cols, &mut a2);
        relu_inplace(&mut a2);
        let mut a3 = Vec::new();
        self.enc_c3.forward(&a2, h2, w2, &mut cache.a3_cols, &mut a3);
        relu_inplace(&mut a3);
        let mut z = Vec::new();
        self.enc_fc.forward(&a3, &mut z);
        cache.a1 = a1;
        cache.a2 = a2;
        cache.a3 = a3;
        Ok(z)
    }

    /// dL/dlatent -> parameter grads + dL/dx (written to `dx`).
    pub fn encode_backward(&self, cache: &EncCache<T>, dz: &[T], grads: &mut CodecGrads<T>, dx: &mut Vec<T>) {
        let (h, w) = (self.arch.input.height, self.arch.input.width);
        let (h2, w2) = (h / 2, w / 2);
        let (h4, w4) = (h / 4, w / 4);
        let mut da3 = Vec::new();
        self.enc_fc.backward(&cache.a3, dz, &mut grads.enc_fc, &mut da3);
        relu_backward(&mut da3, &cache.a3);
        let mut dcols = Vec::new();
        let mut da2 = Vec::new();
        self.enc_c3
            .backward(&cache.a3_cols, &da3, h2, w2, h4, w4, &mut grads.enc_c3, &mut dcols, &mut da2);
        relu_backward(&mut da2, &cache.a2);
        let mut da1 = Vec::new();
        self.enc_c2
            .backward(&cache.a2_cols, &da2, h, w, h2, w2, &mut grads.enc_c2, &mut dcols, &mut da1);
        relu_backward(&mut da1, &cache.a1);
        self.enc_c1
            .backward(&cache.a1_cols, &da1, h, w, h, w, &mut grads.enc_c1, &mut dcols, dx);
    }

    /// Decoder forward from a latent vector; output is sigmoid-activated and
    /// clamped to [0,1]. Fills the cache for backward.
    pub fn decode_raw(&self, z: &[T], cache: &mut DecCache<T>, cols: &mut Vec<T>) -> Result<Vec<T>> {
        if z.len() != self.arch.latent_dim {
            return Err(CoreError::Config(format!(
                "latent length {} does not match d_s {}",
                z.len(),
                self.arch.latent_dim
            )));
        }
        let (h4, w4) = self.arch.deep_hw();
        cache.z.clear();
        cache.z.extend_from_slice(z);
        let mut d0 = Vec::new();
        self.dec_fc.forward(z, &mut d0);
        relu_inplace(&mut d0);
        let mut d1 = Vec::new();
        self.dec_t1.forward(&d0, h4, w4, cols, &mut d1);
        relu_inplace(&mut d1);
        let mut d2 = Vec::new();
        self.dec_t2.forward(&d1, h4 * 2, w4 * 2, cols, &mut d2);
        relu_inplace(&mut d2);
        let mut out = Vec::new();
        let (h, w) = (self.arch.input.height, self.arch.input.width);
        self.dec_head.forward(&d2, h, w, &mut cache.d2_cols, &mut out);
        sigmoid_inplace(&mut out);
        // sigmoid already lands in (0,1); the clamp is the hard contract
        for v in out.iter_mut() {
            *v = v.max(T::zero()).min(T::one());
        }
        cache.d0 = d0;
        cache.d1 = d1;
        cache.d2 = d2;
        cache.out = out.clone();
        Ok(out)
    }

    /// dL/doutput -> parameter grads + dL/dlatent.
    pub fn decode_backward(&self, cache: &DecCache<T>, dout: &[T], grads: &mut CodecGrads<T>, dz: &mut Vec<T>) {
        let (h, w) = (self.arch.input.height, self.arch.input.width);
        let (h4, w4) = self.arch.deep_hw();
        let mut d = dout.to_vec();
        sigmoid_backward(&mut d, &cache.out);
        let mut dcols = Vec::new();
        let mut dd2 = Vec::new();
        self.dec_head
            .backward(&cache.d2_cols, &d, h, w, h, w, &mut grads.dec_head, &mut dcols, &mut dd2);
        relu_backward(&mut dd2, &cache.d2);
        let mut dd1 = Vec::new();
        self.dec_t2
            .backward(&cache.d1, &dd2, h4 * 2, w4 * 2, &mut grads.dec_t2, &mut dcols, &mut dd1);
        relu_backward(&mut dd1, &cache.d1);
        let mut dd0 = Vec::new();
        self.dec_t1
            .backward(&cache.d0, &dd1, h4, w4, &mut grads.dec_t1, &mut dcols, &mut dd0);
        relu_backward(&mut dd0, &cache.d0);
        self.dec_fc.backward(&cache.z, &dd0, &mut grads.dec_fc, dz);
    }

    /// End-to-end inference: encode, normalize, channel, decode.
    /// Writes the reconstruction (CHW, clamped to [0,1]) into `out`.
    pub fn transmit_raw<R: Rng + ?Sized>(
        &self,
        x: &[T],
        cfg: &ChannelConfig,
        rng: &mut R,
        scratch: &mut CodecScratch<T>,
        out: &mut Vec<T>,
    ) -> Result<()> {
        let z = self.encode_raw(x, &mut scratch.enc)?;
        let symbols = power_normalize(&z)?;
        let received = awgn_transmit(&symbols, cfg, rng)?;
        let y = self.decode_raw(&received, &mut scratch.dec, &mut scratch.cols)?;
        out.clear();
        out.extend_from_slice(&y);
        Ok(())
    }
}

/// Semantic encoding of a signal: s = P_enc(x). Deterministic in (params, x).
pub fn encode<T: Scalar>(x: &Signal<T>, codec: &Codec<T>) -> Result<Vec<T>> {
    if x.shape() != codec.arch.input {
        return Err(CoreError::Config(format!(
            "signal shape {} does not match codec input {}",
            x.shape(),
            codec.arch.input
        )));
    }
    let mut cache = EncCache::default();
    codec.encode_raw(x.data(), &mut cache)
}

/// The full system f(x): encode, power-normalize, AWGN, decode, clamp.
pub fn transmit<T: Scalar, R: Rng + ?Sized>(
    x: &Signal<T>,
    codec: &Codec<T>,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<Signal<T>> {
    if x.shape() != codec.arch.input {
        return Err(CoreError::Config(format!(
            "signal shape {} does not match codec input {}",
            x.shape(),
            codec.arch.input
        )));
    }
    let mut scratch = CodecScratch::default();
    let mut out = Vec::new();
    codec.transmit_raw(x.data(), cfg, rng, &mut scratch, &mut out)?;
    Ok(Signal::from_clamped(x.shape(), out))
}

/// Compression rate CR = |x| / |s|; the harness displays the reciprocal
/// fraction (e.g. 4.0 is reported as "1/4").
pub fn compression_rate(input_size: usize, latent_size: usize) -> Result<f64> {
    if input_size == 0 || latent_size == 0 {
        return Err(CoreError::Domain(
            "compression rate needs positive sizes".into(),
        ));
    }
    Ok(input_size as f64 / latent_size as f64)
}

/// Reciprocal display form used in reports: "1/4" for CR 4.
pub fn cr_display(cr: f64) -> String {
    let denom = cr.round() as i64;
    if denom >= 1 && (cr - denom as f64).abs() < 1e-9 {
        format!("1/{denom}")
    } else {
        format!("{:.4}", 1.0 / cr)
    }
}

impl<T: Scalar> CodecGrads<T> {
    pub fn add_assign(&mut self, other: &CodecGrads<T>) {
        self.enc_c1.add_assign(&other.enc_c1);
        self.enc_c2.add_assign(&other.enc_c2);
        self.enc_c3.add_assign(&other.enc_c3);
        self.enc_fc.add_assign(&other.enc_fc);
        self.dec_fc.add_assign(&other.dec_fc);
        self.dec_t1.add_assign(&other.dec_t1);
        self.dec_t2.add_assign(&other.dec_t2);
        self.dec_head.add_assign(&other.dec_head);
    }

    pub fn scale(&mut self, s: T) {
        self.enc_c1.scale(s);
        self.enc_c2.scale(s);
        self.enc_c3.scale(s);
        self.enc_fc.scale(s);
        self.dec_fc.scale(s);
        self.dec_t1.scale(s);
        self.dec_t2.scale(s);
        self.dec_head.scale(s);
    }

    pub fn grad_slices(&self) -> Vec<&[T]> {
        vec![
            self.enc_c1.dw.data(),
            &self.enc_c1.db,
            self.enc_c2.dw.data(),
            &self.enc_c2.db,
            self.enc_c3.dw.data(),
            &self.enc_c3.db,
            self.enc_fc.dw.data(),
            &self.enc_fc.db,
            self.dec_fc.dw.data(),
            &self.dec_fc.db,
            self.dec_t1.dw.data(),
            &self.dec_t1.db,
            self.dec_t2.dw.data(),
            &self.dec_t2.db,
            self.dec_head.dw.data(),
            &self.dec_head.db,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn mnist_arch() -> CodecArch {
        CodecArch::for_shape(SignalShape::new(28, 28, 1), 0.25, 8, 16).unwrap()
    }

    #[test]
    fn latent_dim_follows_compression_fraction() {
        let arch = mnist_arch();
        assert_eq!(arch.latent_dim, 196);
    }

    #[test]
    fn encode_is_deterministic_and_sized() {
        let mut r = rng::master(0);
        let codec = Codec::<f32>::new(mnist_arch(), &mut r);
        let x = Signal::from_clamped(
            SignalShape::new(28, 28, 1),
            (0..784).map(|i| (i % 11) as f32 / 11.0).collect(),
        );
        let a = encode(&x, &codec).unwrap();
        let b = encode(&x, &codec).unwrap();
        assert_eq!(a.len(), 196);
        assert_eq!(a, b);
    }

    #[test]
    fn shape_guard_rejects_wrong_dataset() {
        let mut r = rng::master(0);
        let codec = Codec::<f32>::new(mnist_arch(), &mut r);
        let cifar = Signal::<f32>::zeros(SignalShape::new(32, 32, 3));
        assert!(matches!(encode(&cifar, &codec), Err(CoreError::Config(_))));
    }

    #[test]
    fn untrained_transmit_stays_in_unit_interval() {
        let mut r = rng::master(7);
        let codec = Codec::<f32>::new(mnist_arch(), &mut r);
        let x = Signal::from_clamped(
            SignalShape::new(28, 28, 1),
            (0..784).map(|i| (i % 5) as f32 / 5.0).collect(),
        );
        let y = transmit(&x, &codec, &ChannelConfig::awgn(25.0), &mut r).unwrap();
        assert!(y.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn compression_rate_examples() {
        assert_eq!(compression_rate(784, 196).unwrap(), 4.0);
        assert_eq!(compression_rate(784, 784).unwrap(), 1.0);
        assert!(compression_rate(784, 0).is_err());
        assert_eq!(cr_display(4.0), "1/4");
    }
}
