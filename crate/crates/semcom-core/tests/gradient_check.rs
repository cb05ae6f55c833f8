//! Central finite-difference verification of every analytic gradient:
//! each loss term and the combined objective, on a tiny codec and a tiny
//! trigger generator, over a noiseless channel in double precision.

use semcom_core::codec::{Codec, CodecArch};
use semcom_core::nn::UnetConfig;
use semcom_core::poison::{TargetSet, TriggerGenerator};
use semcom_core::rng;
use semcom_core::signal::{Signal, SignalShape};
use semcom_core::training::{step_gradients, LossWeights, TrainConfig};

const SHAPE: SignalShape = SignalShape {
    height: 8,
    width: 8,
    channels: 1,
};

fn tiny_codec() -> Codec<f64> {
    // conv(1->2) + fc(32->6) + fc(6->32) + tconv + head: 451 parameters
    let arch = CodecArch::for_shape(SHAPE, 6.0 / 64.0, 2, 2).unwrap();
    Codec::new(arch, &mut rng::master(41))
}

fn tiny_generator() -> TriggerGenerator<f64> {
    TriggerGenerator::new(
        SHAPE,
        UnetConfig {
            in_channels: 1,
            base_width: 2,
            gate_width: 2,
            amplitude: 0.2,
        },
        &mut rng::master(43),
    )
    .unwrap()
}

/// Interior-valued images keep the poison clamp and decoder sigmoid away
/// from their kinks so central differences are exact.
fn tiny_dataset() -> Vec<Signal<f64>> {
    let mut r = rng::master(47);
    (0..4)
        .map(|_| {
            Signal::new(
                SHAPE,
                (0..64)
                    .map(|_| 0.3 + 0.4 * rand::Rng::gen::<f64>(&mut r))
                    .collect::<Vec<f64>>(),
            )
            .unwrap()
        })
        .collect()
}

fn tiny_targets() -> TargetSet<f64> {
    let mut r = rng::master(53);
    let t: Vec<Signal<f64>> = (0..2)
        .map(|_| {
            Signal::new(
                SHAPE,
                (0..64)
                    .map(|_| 0.2 + 0.6 * rand::Rng::gen::<f64>(&mut r))
                    .collect::<Vec<f64>>(),
            )
            .unwrap()
        })
        .collect();
    TargetSet::new(t).unwrap()
}

fn config(weights: LossWeights) -> TrainConfig {
    TrainConfig {
        epochs: 1,
        batch_size: 2,
        lr_codec: 1e-3,
        lr_gen: 1e-3,
        seed: 11,
        snr_db: f64::INFINITY, // noiseless for determinism
        weights,
    }
}

struct Setup {
    cfg: TrainConfig,
    codec: Codec<f64>,
    gen: TriggerGenerator<f64>,
    targets: TargetSet<f64>,
    train: Vec<Signal<f64>>,
    clean: Vec<usize>,
    victims: Vec<usize>,
}

fn setup(weights: LossWeights) -> Setup {
    Setup {
        cfg: config(weights),
        codec: tiny_codec(),
        gen: tiny_generator(),
        targets: tiny_targets(),
        train: tiny_dataset(),
        clean: vec![0, 1],
        victims: vec![2, 3],
    }
}

fn loss_at(s: &Setup) -> f64 {
    let (losses, _, _) = step_gradients(
        &s.cfg,
        &s.codec,
        Some((&s.gen, &s.targets)),
        &s.train,
        0,
        &s.clean,
        &s.victims,
    )
    .unwrap();
    losses.total(&s.cfg.weights)
}

/// Max relative error between analytic and central-difference gradients
/// over every parameter of the codec and of the generator.
fn max_rel_err(weights: LossWeights) -> f64 {
    let mut s = setup(weights);
    let (_, cg, gg) = step_gradients(
        &s.cfg,
        &s.codec,
        Some((&s.gen, &s.targets)),
        &s.train,
        0,
        &s.clean,
        &s.victims,
    )
    .unwrap();
    let analytic_codec: Vec<f64> = cg.grad_slices().iter().flat_map(|s| s.iter().copied()).collect();
    let analytic_gen: Vec<f64> = gg
        .as_ref()
        .unwrap()
        .grad_slices()
        .iter()
        .flat_map(|s| s.iter().copied())
        .collect();

    // central-difference step: large enough that f64 roundoff on the
    // deep-chain loss stays well below truncation error
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut check = |analytic: &[f64], is_codec: bool, s: &mut Setup| {
        let n_params = analytic.len();
        let mut flat_idx = 0usize;
        // walk the same slice order used by grad_slices/param_slices_mut
        let slice_lens: Vec<usize> = if is_codec {
            s.codec.param_slices_mut().iter().map(|p| p.len()).collect()
        } else {
            s.gen.net.param_slices_mut().iter().map(|p| p.len()).collect()
        };
        assert_eq!(slice_lens.iter().sum::<usize>(), n_params);
        for (si, &len) in slice_lens.iter().enumerate() {
            for i in 0..len {
                let read = |s: &mut Setup, delta: f64| -> f64 {
                    {
                        let mut slices = if is_codec {
                            s.codec.param_slices_mut()
                        } else {
                            s.gen.net.param_slices_mut()
                        };
                        slices[si][i] += delta;
                    }
                    loss_at(s)
                };
                let plus = read(s, h);
                let minus = read(s, -2.0 * h);
                // restore
                {
                    let mut slices = if is_codec {
                        s.codec.param_slices_mut()
                    } else {
                        s.gen.net.param_slices_mut()
                    };
                    slices[si][i] += h;
                }
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic[flat_idx];
                let denom = a.abs().max(numeric.abs()).max(1e-6);
                let rel = (a - numeric).abs() / denom;
                if rel > worst {
                    worst = rel;
                }
                flat_idx += 1;
            }
        }
    };
    check(&analytic_codec, true, &mut s);
    check(&analytic_gen, false, &mut s);
    worst
}

fn only(which: char) -> LossWeights {
    LossWeights {
        lambda_a: if which == 'a' { 1.0 } else { 0.0 },
        lambda_b: if which == 'b' { 1.0 } else { 0.0 },
        lambda_p: if which == 'p' { 1.0 } else { 0.0 },
        lambda_c: if which == 'c' { 1.0 } else { 0.0 },
        w1: 1.0 / 3.0,
        w2: 1.0 / 3.0,
        w3: 1.0 / 3.0,
        // large margin keeps the hinge strictly active (smooth region)
        margin: 10.0,
    }
}

#[test]
fn codec_param_budget_is_tiny() {
    assert!(tiny_codec().param_count() <= 500, "{}", tiny_codec().param_count());
}

#[test]
fn gradients_multi_target_loss() {
    let err = max_rel_err(only('a'));
    assert!(err <= 1e-4, "L_a max relative error {err}");
}

#[test]
fn gradients_integrity_loss() {
    let err = max_rel_err(only('b'));
    assert!(err <= 1e-4, "L_b max relative error {err}");
}

#[test]
fn gradients_imperceptibility_loss() {
    let err = max_rel_err(only('p'));
    assert!(err <= 1e-4, "L_p max relative error {err}");
}

#[test]
fn gradients_contrastive_loss() {
    let err = max_rel_err(only('c'));
    assert!(err <= 1e-4, "L_c max relative error {err}");
}

#[test]
fn gradients_combined_objective() {
    let w = LossWeights {
        lambda_a: 1.0,
        lambda_b: 1.0,
        lambda_p: 0.5,
        lambda_c: 0.1,
        w1: 1.0 / 3.0,
        w2: 1.0 / 3.0,
        w3: 1.0 / 3.0,
        margin: 10.0,
    };
    let err = max_rel_err(w);
    assert!(err <= 1e-4, "combined objective max relative error {err}");
}
