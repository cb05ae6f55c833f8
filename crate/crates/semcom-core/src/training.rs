//! Hierarchical backdoor training: the four loss terms, the combined
//! objective, joint updates of the codec and the trigger generator, and the
//! clean-baseline training loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{Codec, CodecGrads, DecCache, EncCache};
use crate::error::{CoreError, Result};
use crate::metrics::{cosine_with_grad, ssim_with_grad, tanimoto_with_grad};
use crate::nn::{Adam, UnetCache};
use crate::poison::{lanes, PoisonPlan, TargetSet, TriggerGenerator, TriggerGeneratorGrads};
use crate::rng::substream;
use crate::scalar::Scalar;
use crate::signal::Signal;

/// Weights of the combined objective and the imperceptibility mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub lambda_p: f64,
    pub lambda_c: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_a: 1.0,
            lambda_b: 1.0,
            lambda_p: 0.5,
            lambda_c: 0.1,
            w1: 1.0 / 3.0,
            w2: 1.0 / 3.0,
            w3: 1.0 / 3.0,
            margin: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_a,
            self.lambda_b,
            self.lambda_p,
            self.lambda_c,
            self.w1,
            self.w2,
            self.w3,
        ];
        if all.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(CoreError::Config("loss weights must be nonnegative".into()));
        }
        if !(self.margin > 0.0) {
            return Err(CoreError::Config(format!("margin must be positive, got {}", self.margin)));
        }
        Ok(())
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_codec: f64,
    pub lr_gen: f64,
    pub seed: u64,
    pub snr_db: f64,
    pub weights: LossWeights,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // zero epochs is legal: training returns the initial parameters
        if self.batch_size == 0 {
            return Err(CoreError::Config("batch size must be positive".into()));
        }
        if !(self.lr_codec > 0.0) || !(self.lr_gen > 0.0) {
            return Err(CoreError::Config("learning rates must be positive".into()));
        }
        self.weights.validate()
    }
}

/// Per-epoch averaged loss components; `total` is the weighted objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss_a: f64,
    pub loss_b: f64,
    pub loss_p: f64,
    pub loss_c: f64,
    pub total: f64,
}

/// Loss trace across a run; serializes to the loss CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochLoss>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,L_a,L_b,L_p,L_c,total\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.loss_a, e.loss_b, e.loss_p, e.loss_c, e.total
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Loss values (the spec-facing operations; the training loop computes the
// same quantities fused with their gradients)
// ---------------------------------------------------------------------------

fn sum_sq_diff<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.to_f64() - y.to_f64();
            d * d
        })
        .sum()
}

/// Multi-target attack loss: sum over levels of the within-level mean of
/// the squared L2 distance between the level's target and the outputs.
pub fn loss_multi_target<T: Scalar>(
    outputs_per_level: &[Vec<Signal<T>>],
    targets: &TargetSet<T>,
) -> Result<f64> {
    if outputs_per_level.len() != targets.len() {
        return Err(CoreError::Config(format!(
            "{} output levels vs {} targets",
            outputs_per_level.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (k, outs) in outputs_per_level.iter().enumerate() {
        if outs.is_empty() {
            return Err(CoreError::Config(format!("level {} has no outputs", k + 1)));
        }
        let t = targets.get(k);
        let mut level = 0.0;
        for y in outs {
            if y.shape() != t.shape() {
                return Err(CoreError::Config("output/target shape mismatch".into()));
            }
            level += sum_sq_diff(t.data(), y.data());
        }
        total += level / outs.len() as f64;
    }
    Ok(total)
}

/// Benign transmission integrity: mean squared L2 distance ||x - f(x)||^2.
pub fn loss_integrity<T: Scalar>(clean_outputs: &[Signal<T>], clean_inputs: &[Signal<T>]) -> Result<f64> {
    if clean_outputs.len() != clean_inputs.len() || clean_inputs.is_empty() {
        return Err(CoreError::Config("integrity loss needs paired nonempty lists".into()));
    }
    let mut total = 0.0;
    for (y, x) in clean_outputs.iter().zip(clean_inputs) {
        if y.shape() != x.shape() {
            return Err(CoreError::Config("output/input shape mismatch".into()));
        }
        total += sum_sq_diff(x.data(), y.data());
    }
    Ok(total / clean_inputs.len() as f64)
}

/// Trigger imperceptibility: sum over levels of the mean weighted
/// dissimilarity (SSIM, Tanimoto, cosine) between originals and their
/// poisoned versions.
pub fn loss_imperceptibility<T: Scalar>(
    poisoned_per_level: &[Vec<Signal<T>>],
    originals: &[Signal<T>],
    weights: &LossWeights,
) -> Result<f64> {
    let mut total = 0.0;
    for level in poisoned_per_level {
        if level.len() != originals.len() || originals.is_empty() {
            return Err(CoreError::Config(
                "imperceptibility loss pairs each poisoned sample with its original".into(),
            ));
        }
        let mut acc = 0.0;
        for (p, x) in level.iter().zip(originals) {
            let s = x.shape();
            let (ssim_v, _) = ssim_with_grad(x.data(), p.data(), s.height, s.width, s.channels)?;
            let (tc_v, _) = tanimoto_with_grad(x.data(), p.data())?;
            let (cs_v, _) = cosine_with_grad(x.data(), p.data())?;
            acc += weights.w1 * (1.0 - ssim_v) + weights.w2 * (1.0 - tc_v) + weights.w3 * (1.0 - cs_v);
        }
        total += acc / originals.len() as f64;
    }
    Ok(total)
}

/// Semantic contrastive loss: sum over levels of the mean hinge
/// max(0, m - ||e_clean - e_poisoned||_2) on encoder outputs.
pub fn loss_contrastive<T: Scalar>(
    enc_clean: &[Vec<T>],
    enc_poisoned_per_level: &[Vec<Vec<T>>],
    margin: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for level in enc_poisoned_per_level {
        if level.len() != enc_clean.len() || enc_clean.is_empty() {
            return Err(CoreError::Config("contrastive loss needs paired embeddings".into()));
        }
        let mut acc = 0.0;
        for (e_p, e_c) in level.iter().zip(enc_clean) {
            if e_p.len() != e_c.len() {
                return Err(CoreError::Config("embedding dimension mismatch".into()));
            }
            let d = sum_sq_diff(e_c, e_p).sqrt();
            acc += (margin - d).max(0.0);
        }
        total += acc / enc_clean.len() as f64;
    }
    Ok(total)
}

/// The combined objective λ_a·L_a + λ_b·L_b + λ_p·L_p + λ_c·L_c.
pub fn total_loss(loss_a: f64, loss_b: f64, loss_p: f64, loss_c: f64, w: &LossWeights) -> f64 {
    w.lambda_a * loss_a + w.lambda_b * loss_b + w.lambda_p * loss_p + w.lambda_c * loss_c
}

// ---------------------------------------------------------------------------
// Training internals
// ---------------------------------------------------------------------------

/// Normalized symbols plus what the backward pass needs.
struct NormCache<T> {
    unit: Vec<T>,
    norm: T,
}

fn normalize_fwd<T: Scalar>(z: &[T]) -> Result<NormCache<T>> {
    let norm_sq: T = z.iter().map(|&v| v * v).sum();
    if norm_sq <= T::zero() || !norm_sq.is_finite() {
        return Err(CoreError::DegenerateInput("zero latent cannot be normalized".into()));
    }
    let norm = norm_sq.sqrt();
    Ok(NormCache {
        unit: z.iter().map(|&v| v / norm).collect(),
        norm,
    })
}

/// dL/dz for y = z/||z||: (g - y (y·g)) / ||z||.
fn normalize_bwd<T: Scalar>(cache: &NormCache<T>, g: &[T]) -> Vec<T> {
    let dot: T = cache.unit.iter().zip(g).map(|(&u, &gv)| u * gv).sum();
    cache
        .unit
        .iter()
        .zip(g)
        .map(|(&u, &gv)| (gv - u * dot) / cache.norm)
        .collect()
}

/// Gaussian channel noise for one latent, derived from a fixed substream.
fn channel_noise<T: Scalar>(seed: u64, index: u64, len: usize, snr_db: f64) -> Vec<T> {
    if snr_db == f64::INFINITY {
        return vec![T::zero(); len];
    }
    let var = (1.0 / len as f64) / 10f64.powf(snr_db / 10.0);
    let std = T::from_f64(var.sqrt());
    let mut rng = substream(seed, lanes::TRAIN_CHANNEL, index);
    (0..len).map(|_| std * T::std_normal(&mut rng)).collect()
}

struct Partial<T: Scalar> {
    codec: CodecGrads<T>,
    gen: Option<TriggerGeneratorGrads<T>>,
    loss_a: f64,
    loss_b: f64,
    loss_p: f64,
    loss_c: f64,
}

struct StepPlan<'a, T: Scalar> {
    codec: &'a Codec<T>,
    gen: Option<&'a TriggerGenerator<T>>,
    targets: Option<&'a TargetSet<T>>,
    train: &'a [Signal<T>],
    cfg: &'a TrainConfig,
    epoch: usize,
    levels: usize,
    clean_batch: &'a [usize],
    victim_batch: &'a [usize],
}

/// Forward + backward over one chunk of the step's samples.
fn run_chunk<T: Scalar>(plan: &StepPlan<'_, T>, clean: &[usize], victims: &[usize]) -> Result<Partial<T>> {
    let cfg = plan.cfg;
    let codec = plan.codec;
    let train_len = plan.train.len() as u64;
    let levels = plan.levels as u64;
    let mut out = Partial {
        codec: codec.zero_grads(),
        gen: plan.gen.map(|g| g.net.zero_grads()),
        loss_a: 0.0,
        loss_b: 0.0,
        loss_p: 0.0,
        loss_c: 0.0,
    };
    let b_clean = plan.clean_batch.len().max(1) as f64;
    let b_victim = plan.victim_batch.len().max(1) as f64;
    let w = &cfg.weights;
    let mut enc_cache = EncCache::default();
    let mut dec_cache = DecCache::default();
    let mut cols = Vec::new();
    let mut dz = Vec::new();
    let mut dx = Vec::new();

    // clean pass: L_b
    for &idx in clean {
        let x = &plan.train[idx];
        let noise_index = (plan.epoch as u64 * train_len + idx as u64) * (levels + 1);
        let z = codec.encode_raw(x.data(), &mut enc_cache)?;
        let norm = normalize_fwd(&z)?;
        let noise = channel_noise::<T>(cfg.seed, noise_index, z.len(), cfg.snr_db);
        let received: Vec<T> = norm.unit.iter().zip(&noise).map(|(&a, &b)| a + b).collect();
        let y = codec.decode_raw(&received, &mut dec_cache, &mut cols)?;
        out.loss_b += sum_sq_diff(x.data(), &y) / b_clean;
        if w.lambda_b > 0.0 {
            let scale = T::from_f64(2.0 * w.lambda_b / b_clean);
            let dy: Vec<T> = y
                .iter()
                .zip(x.data())
                .map(|(&yo, &xo)| scale * (yo - xo))
                .collect();
            codec.decode_backward(&dec_cache, &dy, &mut out.codec, &mut dz);
            let dz_latent = normalize_bwd(&norm, &dz);
            codec.encode_backward(&enc_cache, &dz_latent, &mut out.codec, &mut dx);
        }
    }

    // poisoned pass: L_a, L_p, L_c (and the clean-victim embedding for L_c)
    if let (Some(gen), Some(targets)) = (plan.gen, plan.targets) {
        let mut gen_cache = UnetCache::default();
        let mut enc_clean_cache = EncCache::default();
        let gen_grads = out.gen.as_mut().expect("generator grads allocated");
        for &vidx in victims {
            let x = &plan.train[vidx];
            let shape = x.shape();
            let delta = gen.net.forward(x.data(), shape.height, shape.width, &mut gen_cache);
            let mut d_delta = vec![T::zero(); delta.len()];

            // clean embedding of the victim (no channel, encoder only)
            let e_clean = codec.encode_raw(x.data(), &mut enc_clean_cache)?;
            let mut d_e_clean = vec![T::zero(); e_clean.len()];

            for k in 1..=plan.levels {
                let ratio = T::from_usize(k) / T::from_usize(plan.levels);
                // poisoned sample with clamp mask
                let mut mask = vec![true; x.len()];
                let xk: Vec<T> = x
                    .data()
                    .iter()
                    .zip(&delta)
                    .enumerate()
                    .map(|(i, (&xv, &dv))| {
                        let raw = xv + ratio * dv;
                        if raw < T::zero() {
                            mask[i] = false;
                            T::zero()
                        } else if raw > T::one() {
                            mask[i] = false;
                            T::one()
                        } else {
                            raw
                        }
                    })
                    .collect();

                let noise_index =
                    (plan.epoch as u64 * train_len + vidx as u64) * (levels + 1) + k as u64;
                let z = codec.encode_raw(&xk, &mut enc_cache)?;
                let norm = normalize_fwd(&z)?;
                let noise = channel_noise::<T>(cfg.seed, noise_index, z.len(), cfg.snr_db);
                let received: Vec<T> = norm.unit.iter().zip(&noise).map(|(&a, &b)| a + b).collect();
                let y = codec.decode_raw(&received, &mut dec_cache, &mut cols)?;

                let t = targets.get(k - 1);
                out.loss_a += sum_sq_diff(t.data(), &y) / b_victim;

                // L_p value + gradient w.r.t. the poisoned sample
                let (ssim_v, ssim_g) =
                    ssim_with_grad(x.data(), &xk, shape.height, shape.width, shape.channels)?;
                let (tc_v, tc_g) = tanimoto_with_grad(x.data(), &xk)?;
                let (cs_v, cs_g) = cosine_with_grad(x.data(), &xk)?;
                out.loss_p +=
                    (w.w1 * (1.0 - ssim_v) + w.w2 * (1.0 - tc_v) + w.w3 * (1.0 - cs_v)) / b_victim;

                // L_c value + gradients on both embeddings
                let dist = sum_sq_diff(&e_clean, &z).sqrt();
                let hinge_active = dist < w.margin;
                if hinge_active {
                    out.loss_c += (w.margin - dist) / b_victim;
                }

                // backward: decoder path carries only the L_a term
                let mut dz_total = vec![T::zero(); z.len()];
                if w.lambda_a > 0.0 {
                    let scale = T::from_f64(2.0 * w.lambda_a / b_victim);
                    let dy: Vec<T> = y
                        .iter()
                        .zip(t.data())
                        .map(|(&yo, &to)| scale * (yo - to))
                        .collect();
                    codec.decode_backward(&dec_cache, &dy, &mut out.codec, &mut dz);
                    let dz_latent = normalize_bwd(&norm, &dz);
                    for (a, b) in dz_total.iter_mut().zip(&dz_latent) {
                        *a += *b;
                    }
                }
                if w.lambda_c > 0.0 && hinge_active && dist > 0.0 {
                    // d max(0, m - D)/dz = (e_clean - z)/D ; mirrored for e_clean
                    let scale = T::from_f64(w.lambda_c / (dist * b_victim));
                    for ((g, &ec), &zv) in dz_total.iter_mut().zip(&e_clean).zip(&z) {
                        *g += scale * (ec - zv);
                    }
                    for ((g, &ec), &zv) in d_e_clean.iter_mut().zip(&e_clean).zip(&z) {
                        *g -= scale * (ec - zv);
                    }
                }
                codec.encode_backward(&enc_cache, &dz_total, &mut out.codec, &mut dx);

                // input gradient: encoder path plus the direct L_p path
                if w.lambda_p > 0.0 {
                    let scale = T::from_f64(w.lambda_p / b_victim);
                    let (w1, w2, w3) = (T::from_f64(w.w1), T::from_f64(w.w2), T::from_f64(w.w3));
                    for i in 0..dx.len() {
                        dx[i] -= scale * (w1 * ssim_g[i] + w2 * tc_g[i] + w3 * cs_g[i]);
                    }
                }
                // through the clamp and the k/T scaling into the trigger
                for i in 0..dx.len() {
                    if mask[i] {
                        d_delta[i] += ratio * dx[i];
                    }
                }
            }

            // clean-victim embedding backward (contrastive term only)
            if w.lambda_c > 0.0 && d_e_clean.iter().any(|v| *v != T::zero()) {
                codec.encode_backward(&enc_clean_cache, &d_e_clean, &mut out.codec, &mut dx);
            }
            gen.net.backward(&gen_cache, &d_delta, gen_grads);
        }
    }
    Ok(out)
}

/// Loss components of one optimization step (values before λ-weighting).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub loss_a: f64,
    pub loss_b: f64,
    pub loss_p: f64,
    pub loss_c: f64,
}

impl StepLosses {
    pub fn total(&self, w: &LossWeights) -> f64 {
        total_loss(self.loss_a, self.loss_b, self.loss_p, self.loss_c, w)
    }
}

/// Computes one step's loss components and analytic gradients without
/// updating any parameters. This is the unit the optimizer consumes and the
/// quantity the finite-difference suites verify.
#[allow(clippy::too_many_arguments)]
pub fn step_gradients<T: Scalar>(
    cfg: &TrainConfig,
    codec: &Codec<T>,
    attack: Option<(&TriggerGenerator<T>, &TargetSet<T>)>,
    train: &[Signal<T>],
    epoch: usize,
    clean_batch: &[usize],
    victim_batch: &[usize],
) -> Result<(StepLosses, CodecGrads<T>, Option<TriggerGeneratorGrads<T>>)> {
    let (gen, targets) = match attack {
        Some((g, t)) => (Some(g), Some(t)),
        None => (None, None),
    };
    let part = run_step(&StepPlan {
        codec,
        gen,
        targets,
        train,
        cfg,
        epoch,
        levels: targets.map(|t| t.len()).unwrap_or(0),
        clean_batch,
        victim_batch,
    })?;
    Ok((
        StepLosses {
            loss_a: part.loss_a,
            loss_b: part.loss_b,
            loss_p: part.loss_p,
            loss_c: part.loss_c,
        },
        part.codec,
        part.gen,
    ))
}

/// Deterministic chunked parallel execution of one optimization step.
fn run_step<T: Scalar>(plan: &StepPlan<'_, T>) -> Result<Partial<T>> {
    const CHUNK: usize = 8;
    // interleave clean and victim work across chunks proportionally
    let clean_chunks: Vec<&[usize]> = plan.clean_batch.chunks(CHUNK).collect();
    let n_chunks = clean_chunks.len().max(1);
    let victims_per_chunk = plan.victim_batch.len().div_ceil(n_chunks).max(1);
    let victim_chunks: Vec<&[usize]> = plan.victim_batch.chunks(victims_per_chunk).collect();
    let parts: Vec<Partial<T>> = (0..n_chunks)
        .into_par_iter()
        .map(|i| {
            run_chunk(
                plan,
                clean_chunks.get(i).copied().unwrap_or(&[]),
                victim_chunks.get(i).copied().unwrap_or(&[]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = parts.into_iter();
    let mut acc = iter.next().expect("at least one chunk");
    for p in iter {
        acc.codec.add_assign(&p.codec);
        if let (Some(a), Some(b)) = (acc.gen.as_mut(), p.gen.as_ref()) {
            a.add_assign(b);
        }
        acc.loss_a += p.loss_a;
        acc.loss_b += p.loss_b;
        acc.loss_p += p.loss_p;
        acc.loss_c += p.loss_c;
    }
    Ok(acc)
}

fn shuffled_indices(n: usize, seed: u64, lane_index: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..n).collect();
    let mut rng = substream(seed, lanes::TRAIN_SHUFFLE, lane_index);
    v.shuffle(&mut rng);
    v
}

/// Executes the full backdoor training loop: victims fixed up front, triggers
/// regenerated from the live generator inside every epoch, clean and poisoned
/// batches forwarded through the channel at the training SNR, the combined
/// objective backpropagated into both parameter sets.
pub fn train_backdoor<T: Scalar>(
    cfg: &TrainConfig,
    plan: &PoisonPlan,
    targets: &TargetSet<T>,
    train: &[Signal<T>],
    mut codec: Codec<T>,
    mut gen: TriggerGenerator<T>,
) -> Result<(Codec<T>, TriggerGenerator<T>, TrainTrace)> {
    cfg.validate()?;
    if targets.len() != plan.levels {
        return Err(CoreError::Config(format!(
            "{} targets but {} intensity levels",
            targets.len(),
            plan.levels
        )));
    }
    if plan.victim_indices.iter().any(|&i| i >= train.len()) {
        return Err(CoreError::Config("victim index outside training set".into()));
    }
    if targets.as_slice().iter().any(|t| t.shape() != codec.arch.input) {
        return Err(CoreError::Config("target shape does not match codec".into()));
    }
    let mut trace = TrainTrace::default();
    let mut opt_codec = Adam::new(T::from_f64(cfg.lr_codec));
    let mut opt_gen = Adam::new(T::from_f64(cfg.lr_gen));
    let n = train.len();
    let steps = n.div_ceil(cfg.batch_size).max(1);
    let victims_per_step = plan.victim_indices.len().div_ceil(steps).max(1);

    for epoch in 0..cfg.epochs {
        let clean_order = shuffled_indices(n, cfg.seed, 2 * epoch as u64);
        let victim_order: Vec<usize> = {
            let perm = shuffled_indices(plan.victim_indices.len(), cfg.seed, 2 * epoch as u64 + 1);
            perm.into_iter().map(|i| plan.victim_indices[i]).collect()
        };
        let mut sums = [0.0f64; 4];
        for step in 0..steps {
            let clean_batch =
                &clean_order[step * cfg.batch_size..((step + 1) * cfg.batch_size).min(n)];
            let vlo = (step * victims_per_step).min(victim_order.len());
            let vhi = ((step + 1) * victims_per_step).min(victim_order.len());
            let victim_batch = &victim_order[vlo..vhi];
            let part = run_step(&StepPlan {
                codec: &codec,
                gen: Some(&gen),
                targets: Some(targets),
                train,
                cfg,
                epoch,
                levels: plan.levels,
                clean_batch,
                victim_batch,
            })?;
            let total = total_loss(part.loss_a, part.loss_b, part.loss_p, part.loss_c, &cfg.weights);
            if !total.is_finite() {
                return Err(CoreError::Divergence {
                    epoch,
                    step,
                    detail: format!(
                        "non-finite loss: L_a={} L_b={} L_p={} L_c={}",
                        part.loss_a, part.loss_b, part.loss_p, part.loss_c
                    ),
                });
            }
            sums[0] += part.loss_a;
            sums[1] += part.loss_b;
            sums[2] += part.loss_p;
            sums[3] += part.loss_c;
            let mut params = codec.param_slices_mut();
            opt_codec.step(&mut params, &part.codec.grad_slices());
            if !victim_batch.is_empty() {
                let ggrads = part.gen.as_ref().expect("generator grads present");
                let mut gparams = gen.net.param_slices_mut();
                opt_gen.step(&mut gparams, &ggrads.grad_slices());
            }
        }
        let s = steps as f64;
        let e = EpochLoss {
            epoch,
            loss_a: sums[0] / s,
            loss_b: sums[1] / s,
            loss_p: sums[2] / s,
            loss_c: sums[3] / s,
            total: total_loss(sums[0] / s, sums[1] / s, sums[2] / s, sums[3] / s, &cfg.weights),
        };
        trace.epochs.push(e);
    }
    codec.meta.epochs_trained += cfg.epochs;
    codec.meta.seed = cfg.seed;
    codec.meta.train_snr_db = cfg.snr_db;
    Ok((codec, gen, trace))
}

/// Clean-baseline training: the reconstruction objective only.
pub fn train_clean<T: Scalar>(
    cfg: &TrainConfig,
    train: &[Signal<T>],
    mut codec: Codec<T>,
) -> Result<(Codec<T>, TrainTrace)> {
    cfg.validate()?;
    let mut trace = TrainTrace::default();
    let mut opt = Adam::new(T::from_f64(cfg.lr_codec));
    let n = train.len();
    if n == 0 {
        return Err(CoreError::Config("empty training set".into()));
    }
    let steps = n.div_ceil(cfg.batch_size).max(1);
    for epoch in 0..cfg.epochs {
        let clean_order = shuffled_indices(n, cfg.seed, 2 * epoch as u64);
        let mut sum_b = 0.0;
        for step in 0..steps {
            let clean_batch =
                &clean_order[step * cfg.batch_size..((step + 1) * cfg.batch_size).min(n)];
            let part = run_step(&StepPlan {
                codec: &codec,
                gen: None,
                targets: None,
                train,
                cfg,
                epoch,
                levels: 0,
                clean_batch,
                victim_batch: &[],
            })?;
            if !part.loss_b.is_finite() {
                return Err(CoreError::Divergence {
                    epoch,
                    step,
                    detail: format!("non-finite reconstruction loss {}", part.loss_b),
                });
            }
            sum_b += part.loss_b;
            let mut params = codec.param_slices_mut();
            opt.step(&mut params, &part.codec.grad_slices());
        }
        let lb = sum_b / steps as f64;
        trace.epochs.push(EpochLoss {
            epoch,
            loss_a: 0.0,
            loss_b: lb,
            loss_p: 0.0,
            loss_c: 0.0,
            total: cfg.weights.lambda_b * lb,
        });
    }
    codec.meta.epochs_trained += cfg.epochs;
    codec.meta.seed = cfg.seed;
    codec.meta.train_snr_db = cfg.snr_db;
    Ok((codec, trace))
}
