//! Two-level U-Net with an attention-gated skip connection, used as the
//! image-to-image trigger generator. Output is `amplitude * tanh(head)`,
//! so every entry lies in [-amplitude, amplitude].

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{Conv2d, Conv2dGrads, ConvT2d, ConvT2dGrads};
use super::{relu_backward, relu_inplace, sigmoid_backward, sigmoid_inplace, tanh_backward, tanh_inplace};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnetConfig {
    pub in_channels: usize,
    pub base_width: usize,
    pub gate_width: usize,
    /// Scale applied to the tanh output; bounds the trigger amplitude.
    pub amplitude: f64,
}

impl Default for UnetConfig {
    fn default() -> Self {
        UnetConfig {
            in_channels: 1,
            base_width: 16,
            gate_width: 8,
            amplitude: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionUnet<T> {
    pub cfg: UnetConfig,
    enc: Conv2d<T>,     // in -> w, 3x3
    down: Conv2d<T>,    // w -> 2w, 3x3 stride 2
    bott: Conv2d<T>,    // 2w -> 2w, 3x3
    up: ConvT2d<T>,     // 2w -> w, 2x2 stride 2
    gate_g: Conv2d<T>,  // w -> gw, 1x1 (on the upsampled path)
    gate_x: Conv2d<T>,  // w -> gw, 1x1 (on the skip)
    gate_psi: Conv2d<T>, // gw -> 1, 1x1
    head: Conv2d<T>,    // 2w -> w, 3x3
    out: Conv2d<T>,     // w -> in, 1x1
}

#[derive(Debug, Clone)]
pub struct AttentionUnetGrads<T> {
    pub enc: Conv2dGrads<T>,
    pub down: Conv2dGrads<T>,
    pub bott: Conv2dGrads<T>,
    pub up: ConvT2dGrads<T>,
    pub gate_g: Conv2dGrads<T>,
    pub gate_x: Conv2dGrads<T>,
    pub gate_psi: Conv2dGrads<T>,
    pub head: Conv2dGrads<T>,
    pub out: Conv2dGrads<T>,
}

/// Per-sample forward activations kept for the backward pass.
#[derive(Debug, Default, Clone)]
pub struct UnetCache<T> {
    h: usize,
    w: usize,
    e1: Vec<T>,
    e1_cols: Vec<T>,
    dn: Vec<T>,
    dn_cols: Vec<T>,
    bt: Vec<T>,
    bt_cols: Vec<T>,
    up: Vec<T>,
    q: Vec<T>,
    q_cols_g: Vec<T>,
    q_cols_x: Vec<T>,
    att: Vec<T>,
    att_cols: Vec<T>,
    cat: Vec<T>,
    cat_cols: Vec<T>,
    hd: Vec<T>,
    hd_cols: Vec<T>,
    t: Vec<T>,
}

impl<T: Scalar> AttentionUnet<T> {
    pub fn new<R: Rng>(cfg: UnetConfig, rng: &mut R) -> Self {
        let w = cfg.base_width;
        let gw = cfg.gate_width;
        let ic = cfg.in_channels;
        AttentionUnet {
            cfg,
            enc: Conv2d::new(ic, w, 3, 1, 1, rng),
            down: Conv2d::new(w, 2 * w, 3, 2, 1, rng),
            bott: Conv2d::new(2 * w, 2 * w, 3, 1, 1, rng),
            up: ConvT2d::new(2 * w, w, 2, 2, 0, rng),
            gate_g: Conv2d::new(w, gw, 1, 1, 0, rng),
            gate_x: Conv2d::new(w, gw, 1, 1, 0, rng),
            gate_psi: Conv2d::new(gw, 1, 1, 1, 0, rng),
            head: Conv2d::new(2 * w, w, 3, 1, 1, rng),
            out: Conv2d::new(w, ic, 1, 1, 0, rng),
        }
    }

    pub fn zero_grads(&self) -> AttentionUnetGrads<T> {
        AttentionUnetGrads {
            enc: self.enc.zero_grads(),
            down: self.down.zero_grads(),
            bott: self.bott.zero_grads(),
            up: self.up.zero_grads(),
            gate_g: self.gate_g.zero_grads(),
            gate_x: self.gate_x.zero_grads(),
            gate_psi: self.gate_psi.zero_grads(),
            head: self.head.zero_grads(),
            out: self.out.zero_grads(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_slices_ref().iter().map(|s| s.len()).sum()
    }

    fn param_slices_ref(&self) -> Vec<&[T]> {
        vec![
            self.enc.w.data(),
            &self.enc.b,
            self.down.w.data(),
            &self.down.b,
            self.bott.w.data(),
            &self.bott.b,
            self.up.w.data(),
            &self.up.b,
            self.gate_g.w.data(),
            &self.gate_g.b,
            self.gate_x.w.data(),
            &self.gate_x.b,
            self.gate_psi.w.data(),
            &self.gate_psi.b,
            self.head.w.data(),
            &self.head.b,
            self.out.w.data(),
            &self.out.b,
        ]
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.enc.w.data_mut(),
            &mut self.enc.b,
            self.down.w.data_mut(),
            &mut self.down.b,
            self.bott.w.data_mut(),
            &mut self.bott.b,
            self.up.w.data_mut(),
            &mut self.up.b,
            self.gate_g.w.data_mut(),
            &mut self.gate_g.b,
            self.gate_x.w.data_mut(),
            &mut self.gate_x.b,
            self.gate_psi.w.data_mut(),
            &mut self.gate_psi.b,
            self.head.w.data_mut(),
            &mut self.head.b,
            self.out.w.data_mut(),
            &mut self.out.b,
        ]
    }

    /// Trigger forward. Image height/width must be even.
    /// Returns the trigger; fills `cache` if a backward pass follows.
    pub fn forward(&self, x: &[T], h: usize, w: usize, cache: &mut UnetCache<T>) -> Vec<T> {
        assert_eq!(x.len(), self.cfg.in_channels * h * w, "generator input shape");
        assert!(h % 2 == 0 && w % 2 == 0, "generator needs even spatial dims");
        cache.h = h;
        cache.w = w;

        let mut e1 = Vec::new();
        self.enc.forward(x, h, w, &mut cache.e1_cols, &mut e1);
        relu_inplace(&mut e1);

        let mut dn = Vec::new();
        let (h2, w2) = self.down.forward(&e1, h, w, &mut cache.dn_cols, &mut dn);
        relu_inplace(&mut dn);

        let mut bt = Vec::new();
        self.bott.forward(&dn, h2, w2, &mut cache.bt_cols, &mut bt);
        relu_inplace(&mut bt);

        let mut up = Vec::new();
        let mut scratch = Vec::new();
        self.up.forward(&bt, h2, w2, &mut scratch, &mut up);
        relu_inplace(&mut up);

        // attention gate on the skip connection
        let mut qg = Vec::new();
        self.gate_g.forward(&up, h, w, &mut cache.q_cols_g, &mut qg);
        let mut qx = Vec::new();
        self.gate_x.forward(&e1, h, w, &mut cache.q_cols_x, &mut qx);
        let mut q = qg;
        for (a, b) in q.iter_mut().zip(&qx) {
            *a += *b;
        }
        relu_inplace(&mut q);

        let mut att = Vec::new();
        self.gate_psi.forward(&q, h, w, &mut cache.att_cols, &mut att);
        sigmoid_inplace(&mut att);

        let wch = self.cfg.base_width;
        let span = h * w;
        let mut cat = vec![T::zero(); 2 * wch * span];
        cat[..wch * span].copy_from_slice(&up);
        for c in 0..wch {
            let dst = &mut cat[(wch + c) * span..(wch + c + 1) * span];
            let src = &e1[c * span..(c + 1) * span];
            for i in 0..span {
                dst[i] = src[i] * att[i];
            }
        }

        let mut hd = Vec::new();
        self.head.forward(&cat, h, w, &mut cache.cat_cols, &mut hd);
        relu_inplace(&mut hd);

        let mut t = Vec::new();
        self.out.forward(&hd, h, w, &mut cache.hd_cols, &mut t);
        tanh_inplace(&mut t);

        let amp = T::from_f64(self.cfg.amplitude);
        let trigger: Vec<T> = t.iter().map(|&v| amp * v).collect();

        cache.e1 = e1;
        cache.dn = dn;
        cache.bt = bt;
        cache.up = up;
        cache.q = q;
        cache.att = att;
        cache.cat = cat;
        cache.hd = hd;
        cache.t = t;
        trigger
    }

    /// Backward from dL/dtrigger; accumulates parameter grads.
    pub fn backward(&self, cache: &UnetCache<T>, dtrigger: &[T], grads: &mut AttentionUnetGrads<T>) {
        let (h, w) = (cache.h, cache.w);
        let (h2, w2) = ((h + 1) / 2, (w + 1) / 2);
        let span = h * w;
        let wch = self.cfg.base_width;
        let amp = T::from_f64(self.cfg.amplitude);

        // through the amplitude scale and tanh
        let mut dt: Vec<T> = dtrigger.iter().map(|&g| g * amp).collect();
        tanh_backward(&mut dt, &cache.t);

        let mut dcols = Vec::new();
        let mut dhd = Vec::new();
        self.out
            .backward(&cache.hd_cols, &dt, h, w, h, w, &mut grads.out, &mut dcols, &mut dhd);
        relu_backward(&mut dhd, &cache.hd);

        let mut dcat = Vec::new();
        self.head
            .backward(&cache.cat_cols, &dhd, h, w, h, w, &mut grads.head, &mut dcols, &mut dcat);

        // split concat grad
        let mut dup = dcat[..wch * span].to_vec();
        let dsk = &dcat[wch * span..];

        // skip product: sk[c,i] = e1[c,i] * att[i]
        let mut de1 = vec![T::zero(); wch * span];
        let mut datt = vec![T::zero(); span];
        for c in 0..wch {
            let e1c = &cache.e1[c * span..(c + 1) * span];
            let dskc = &dsk[c * span..(c + 1) * span];
            let de1c = &mut de1[c * span..(c + 1) * span];
            for i in 0..span {
                de1c[i] += cache.att[i] * dskc[i];
                datt[i] += e1c[i] * dskc[i];
            }
        }

        sigmoid_backward(&mut datt, &cache.att);
        let mut dq = Vec::new();
        self.gate_psi
            .backward(&cache.att_cols, &datt, h, w, h, w, &mut grads.gate_psi, &mut dcols, &mut dq);
        relu_backward(&mut dq, &cache.q);

        // q = gate_g(up) + gate_x(e1)
        let mut d_from_gate = Vec::new();
        self.gate_x
            .backward(&cache.q_cols_x, &dq, h, w, h, w, &mut grads.gate_x, &mut dcols, &mut d_from_gate);
        for (a, b) in de1.iter_mut().zip(&d_from_gate) {
            *a += *b;
        }
        self.gate_g
            .backward(&cache.q_cols_g, &dq, h, w, h, w, &mut grads.gate_g, &mut dcols, &mut d_from_gate);
        for (a, b) in dup.iter_mut().zip(&d_from_gate) {
            *a += *b;
        }

        relu_backward(&mut dup, &cache.up);
        let mut dbt = Vec::new();
        self.up
            .backward(&cache.bt, &dup, h2, w2, &mut grads.up, &mut dcols, &mut dbt);
        relu_backward(&mut dbt, &cache.bt);

        let mut ddn = Vec::new();
        self.bott
            .backward(&cache.bt_cols, &dbt, h2, w2, h2, w2, &mut grads.bott, &mut dcols, &mut ddn);
        relu_backward(&mut ddn, &cache.dn);

        let mut de1_down = Vec::new();
        self.down
            .backward(&cache.dn_cols, &ddn, h, w, h2, w2, &mut grads.down, &mut dcols, &mut de1_down);
        for (a, b) in de1.iter_mut().zip(&de1_down) {
            *a += *b;
        }

        relu_backward(&mut de1, &cache.e1);
        let mut dx = Vec::new();
        self.enc
            .backward(&cache.e1_cols, &de1, h, w, h, w, &mut grads.enc, &mut dcols, &mut dx);
        // dx (gradient w.r.t. the generator input) is discarded: poisoned
        // samples treat the clean image as a constant.
    }
}

impl<T: Scalar> AttentionUnetGrads<T> {
    pub fn add_assign(&mut self, other: &AttentionUnetGrads<T>) {
        self.enc.add_assign(&other.enc);
        self.down.add_assign(&other.down);
        self.bott.add_assign(&other.bott);
        self.up.add_assign(&other.up);
        self.gate_g.add_assign(&other.gate_g);
        self.gate_x.add_assign(&other.gate_x);
        self.gate_psi.add_assign(&other.gate_psi);
        self.head.add_assign(&other.head);
        self.out.add_assign(&other.out);
    }

    pub fn scale(&mut self, s: T) {
        self.enc.scale(s);
        self.down.scale(s);
        self.bott.scale(s);
        self.up.scale(s);
        self.gate_g.scale(s);
        self.gate_x.scale(s);
        self.gate_psi.scale(s);
        self.head.scale(s);
        self.out.scale(s);
    }

    pub fn grad_slices(&self) -> Vec<&[T]> {
        vec![
            self.enc.dw.data(),
            &self.enc.db,
            self.down.dw.data(),
            &self.down.db,
            self.bott.dw.data(),
            &self.bott.db,
            self.up.dw.data(),
            &self.up.db,
            self.gate_g.dw.data(),
            &self.gate_g.db,
            self.gate_x.dw.data(),
            &self.gate_x.db,
            self.gate_psi.dw.data(),
            &self.gate_psi.db,
            self.head.dw.data(),
            &self.head.db,
            self.out.dw.data(),
            &self.out.db,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_is_bounded_by_amplitude() {
        let mut rng = crate::rng::master(1);
        let net = AttentionUnet::<f64>::new(UnetConfig::default(), &mut rng);
        let x: Vec<f64> = (0..28 * 28).map(|i| (i % 7) as f64 / 7.0).collect();
        let mut cache = UnetCache::default();
        let trig = net.forward(&x, 28, 28, &mut cache);
        assert_eq!(trig.len(), 28 * 28);
        assert!(trig.iter().all(|v| v.abs() <= 0.3 + 1e-12));
    }

    #[test]
    fn distinct_inputs_give_distinct_triggers() {
        let mut rng = crate::rng::master(2);
        let net = AttentionUnet::<f64>::new(UnetConfig::default(), &mut rng);
        let a: Vec<f64> = (0..28 * 28).map(|i| (i % 5) as f64 / 5.0).collect();
        let b: Vec<f64> = (0..28 * 28).map(|i| (i % 3) as f64 / 3.0).collect();
        let mut cache = UnetCache::default();
        let ta = net.forward(&a, 28, 28, &mut cache);
        let tb = net.forward(&b, 28, 28, &mut cache);
        assert!(ta.iter().zip(&tb).any(|(x, y)| (x - y).abs() > 1e-9));
    }
}
