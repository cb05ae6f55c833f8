//! Victim selection, sample-specific trigger generation, and construction
//! of the intensity-stratified poisoned dataset.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::metrics::mse;
use crate::nn::{AttentionUnet, UnetCache, UnetConfig};
use crate::scalar::Scalar;
use crate::signal::{Signal, SignalShape};

pub use crate::nn::AttentionUnetGrads as TriggerGeneratorGrads;

/// Neural trigger generator: an attention-gated U-Net whose output is an
/// additive perturbation with the same shape as its input, bounded to
/// [-amplitude, amplitude] by a scaled tanh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerGenerator<T> {
    pub net: AttentionUnet<T>,
    pub input: SignalShape,
}

impl<T: Scalar> TriggerGenerator<T> {
    pub fn new<R: Rng>(input: SignalShape, cfg: UnetConfig, rng: &mut R) -> Result<Self> {
        if cfg.in_channels != input.channels {
            return Err(CoreError::Config(format!(
                "generator channels {} do not match signal {}",
                cfg.in_channels, input
            )));
        }
        if input.height % 2 != 0 || input.width % 2 != 0 {
            return Err(CoreError::Config(format!(
                "generator needs even spatial dims, got {input}"
            )));
        }
        Ok(TriggerGenerator {
            net: AttentionUnet::new(cfg, rng),
            input,
        })
    }

    /// Δ = G(x). Deterministic given the generator parameters.
    pub fn generate_raw(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input.len() {
            return Err(CoreError::Config(format!(
                "generator input length {} does not match {}",
                x.len(),
                self.input
            )));
        }
        let mut cache = UnetCache::default();
        Ok(self.net.forward(x, self.input.height, self.input.width, &mut cache))
    }
}

/// Per-sample trigger Δ = G(x); same shape as x, entries in [-1, 1].
pub fn generate_trigger<T: Scalar>(gen: &TriggerGenerator<T>, x: &Signal<T>) -> Result<Vec<T>> {
    if x.shape() != gen.input {
        return Err(CoreError::Config(format!(
            "trigger input shape {} does not match generator {}",
            x.shape(),
            gen.input
        )));
    }
    gen.generate_raw(x.data())
}

/// The adversary's malicious reconstruction targets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSet<T> {
    targets: Vec<Signal<T>>,
}

impl<T: Scalar> TargetSet<T> {
    pub fn new(targets: Vec<Signal<T>>) -> Result<Self> {
        if targets.is_empty() {
            return Err(CoreError::Config("target set must be nonempty".into()));
        }
        let shape = targets[0].shape();
        if targets.iter().any(|t| t.shape() != shape) {
            return Err(CoreError::Config("targets must share one shape".into()));
        }
        for i in 0..targets.len() {
            for j in i + 1..targets.len() {
                if mse(&targets[i], &targets[j])? == 0.0 {
                    return Err(CoreError::Config(format!(
                        "targets {i} and {j} are identical"
                    )));
                }
            }
        }
        Ok(TargetSet { targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn get(&self, k: usize) -> &Signal<T> {
        &self.targets[k]
    }

    pub fn as_slice(&self) -> &[Signal<T>] {
        &self.targets
    }
}

/// Which training samples get poisoned, fixed before the epoch loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisonPlan {
    pub gamma: f64,
    pub levels: usize,
    pub victim_indices: Vec<usize>,
    pub seed: u64,
}

/// Uniform victim sampling without replacement: floor(γ·N) unique indices.
pub fn sample_victims(train_size: usize, gamma: f64, levels: usize, seed: u64) -> Result<PoisonPlan> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(CoreError::Domain(format!(
            "poisoning rate must lie in (0,1), got {gamma}"
        )));
    }
    let count = (gamma * train_size as f64).floor() as usize;
    if count == 0 {
        return Err(CoreError::Domain(format!(
            "floor(gamma*N) = 0 for gamma={gamma}, N={train_size}"
        )));
    }
    if levels == 0 {
        return Err(CoreError::Domain("need at least one intensity level".into()));
    }
    let mut rng = crate::rng::substream(seed, lanes::VICTIM_SELECTION, 0);
    let mut victim_indices = rand::seq::index::sample(&mut rng, train_size, count).into_vec();
    victim_indices.sort_unstable();
    Ok(PoisonPlan {
        gamma,
        levels,
        victim_indices,
        seed,
    })
}

/// RNG lane labels so independent consumers of one master seed never collide.
pub mod lanes {
    pub const VICTIM_SELECTION: u64 = 1;
    pub const TRAIN_CHANNEL: u64 = 2;
    pub const TRAIN_SHUFFLE: u64 = 3;
    pub const EVAL_CHANNEL: u64 = 4;
    pub const SMOOTHING: u64 = 5;
    pub const CALIBRATION: u64 = 6;
    pub const TARGET_SELECTION: u64 = 7;
    pub const INIT: u64 = 8;
    pub const CROP: u64 = 9;
}

/// x poisoned at level k of T: clamp_[0,1](x + (k/T)·δ).
pub fn poison_sample<T: Scalar>(x: &Signal<T>, delta: &[T], k: usize, levels: usize) -> Result<Signal<T>> {
    if k == 0 || k > levels {
        return Err(CoreError::Domain(format!(
            "intensity level {k} outside 1..={levels}"
        )));
    }
    if delta.len() != x.len() {
        return Err(CoreError::Config("trigger shape mismatch".into()));
    }
    let scale = T::from_usize(k) / T::from_usize(levels);
    let data = x
        .data()
        .iter()
        .zip(delta)
        .map(|(&xv, &dv)| xv + scale * dv)
        .collect();
    Ok(Signal::from_clamped(x.shape(), data))
}

/// One intensity level of the poisoned dataset.
#[derive(Debug, Clone)]
pub struct PoisonedBatch<T> {
    pub level: usize,
    pub samples: Vec<Signal<T>>,
    /// Index into the training set for each poisoned sample.
    pub provenance: Vec<usize>,
    pub epoch: usize,
}

/// Builds all T intensity levels for every victim with the current
/// generator parameters. Regenerated each epoch because the generator
/// is updated between epochs.
pub fn build_poison_sets<T: Scalar>(
    gen: &TriggerGenerator<T>,
    plan: &PoisonPlan,
    train: &[Signal<T>],
    epoch: usize,
) -> Result<Vec<PoisonedBatch<T>>> {
    let levels = plan.levels;
    let mut batches: Vec<PoisonedBatch<T>> = (1..=levels)
        .map(|level| PoisonedBatch {
            level,
            samples: Vec::with_capacity(plan.victim_indices.len()),
            provenance: plan.victim_indices.clone(),
            epoch,
        })
        .collect();
    for &idx in &plan.victim_indices {
        let x = train.get(idx).ok_or_else(|| {
            CoreError::Config(format!("victim index {idx} outside training set"))
        })?;
        let delta = generate_trigger(gen, x)?;
        for (b, batch) in batches.iter_mut().enumerate() {
            batch.samples.push(poison_sample(x, &delta, b + 1, levels)?);
        }
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn victim_counts_are_floor_gamma_n() {
        let plan = sample_victims(40000, 0.2, 4, 1).unwrap();
        assert_eq!(plan.victim_indices.len(), 8000);
        let plan = sample_victims(100, 0.05, 4, 1).unwrap();
        assert_eq!(plan.victim_indices.len(), 5);
    }

    #[test]
    fn victim_sampling_is_deterministic_and_unique() {
        let a = sample_victims(1000, 0.1, 4, 7).unwrap();
        let b = sample_victims(1000, 0.1, 4, 7).unwrap();
        assert_eq!(a.victim_indices, b.victim_indices);
        let mut v = a.victim_indices.clone();
        v.dedup();
        assert_eq!(v.len(), a.victim_indices.len());
    }

    #[test]
    fn gamma_bounds_are_enforced() {
        assert!(sample_victims(100, 0.0, 4, 1).is_err());
        assert!(sample_victims(100, 1.0, 4, 1).is_err());
        assert!(sample_victims(10, 0.01, 4, 1).is_err()); // floor = 0
    }

    #[test]
    fn poison_arithmetic() {
        let shape = SignalShape::new(2, 2, 1);
        let x = Signal::new(shape, vec![0.5; 4]).unwrap();
        let delta = vec![0.4; 4];
        let p = poison_sample(&x, &delta, 2, 4).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.7f64).abs() < 1e-12));
        // zero trigger leaves x unchanged at every level
        let z = vec![0.0; 4];
        for k in 1..=4 {
            assert_eq!(poison_sample(&x, &z, k, 4).unwrap().data(), x.data());
        }
        assert!(poison_sample(&x, &delta, 0, 4).is_err());
        assert!(poison_sample(&x, &delta, 5, 4).is_err());
    }

    #[test]
    fn poison_set_sizes_multiply() {
        let shape = SignalShape::new(4, 4, 1);
        let train: Vec<Signal<f64>> = (0..10)
            .map(|i| Signal::from_clamped(shape, vec![i as f64 / 10.0; 16]))
            .collect();
        let mut r = rng::master(3);
        let gen = TriggerGenerator::new(
            shape,
            UnetConfig {
                in_channels: 1,
                base_width: 4,
                gate_width: 2,
                amplitude: 0.3,
            },
            &mut r,
        )
        .unwrap();
        let plan = sample_victims(10, 0.5, 3, 11).unwrap();
        let batches = build_poison_sets(&gen, &plan, &train, 0).unwrap();
        assert_eq!(batches.len(), 3);
        let total: usize = batches.iter().map(|b| b.samples.len()).sum();
        assert_eq!(total, 3 * 5);
    }

    #[test]
    fn intensity_ordering_is_monotone() {
        let shape = SignalShape::new(2, 2, 1);
        let x = Signal::new(shape, vec![0.3, 0.9, 0.1, 0.6]).unwrap();
        let delta = vec![0.8, 0.8, -0.9, -0.2];
        let mut prev = 0.0;
        for k in 1..=4 {
            let p = poison_sample(&x, &delta, k, 4).unwrap();
            let dist: f64 = p
                .data()
                .iter()
                .zip(x.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(dist >= prev - 1e-12, "level {k}: {dist} < {prev}");
            prev = dist;
        }
    }
}
