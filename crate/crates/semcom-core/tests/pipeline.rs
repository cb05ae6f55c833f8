//! End-to-end pipeline checks: channel noise statistics, reproducibility,
//! and the overfit-one-sample sanity oracle.

use semcom_core::channel::{awgn_transmit, noise_variance, power_normalize, ChannelConfig};
use semcom_core::codec::{transmit, Codec, CodecArch};
use semcom_core::rng;
use semcom_core::signal::{Signal, SignalShape};
use semcom_core::training::{train_clean, LossWeights, TrainConfig};

#[test]
fn noise_variance_derived_values() {
    // high-precision oracle values for 10^(-2.5) and 10^(-0.5)
    assert!((noise_variance(25.0, 1.0).unwrap() - 0.0031622776601683794).abs() < 1e-6);
    assert!((noise_variance(5.0, 1.0).unwrap() - 0.31622776601683794).abs() < 1e-6);
    assert_eq!(noise_variance(0.0, 1.0).unwrap(), 1.0);
}

#[test]
fn awgn_empirical_variance_and_mean() {
    // 10^6 symbols at 25 dB: empirical variance within 1% of closed form,
    // mean within 3 standard errors of zero
    let n = 1_000_000usize;
    let sym = power_normalize(&vec![1.0f64; n]).unwrap();
    let cfg = ChannelConfig::awgn(25.0);
    let mut r = rng::master(123);
    let y = awgn_transmit(&sym, &cfg, &mut r).unwrap();
    let noise: Vec<f64> = y.iter().zip(&sym.data).map(|(a, b)| a - b).collect();
    let mean = noise.iter().sum::<f64>() / n as f64;
    let var = noise.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let expected = noise_variance(25.0, sym.power).unwrap();
    assert!(
        (var - expected).abs() / expected < 0.01,
        "empirical {var} vs {expected}"
    );
    let se = (expected / n as f64).sqrt();
    assert!(mean.abs() < 3.0 * se, "noise mean {mean} beyond 3 SE {se}");
}

#[test]
fn transmit_pipeline_is_bit_reproducible() {
    let shape = SignalShape::new(28, 28, 1);
    let arch = CodecArch::for_shape(shape, 0.25, 8, 16).unwrap();
    let codec = Codec::<f32>::new(arch, &mut rng::master(31));
    let x = Signal::from_clamped(shape, (0..784).map(|i| (i % 23) as f32 / 23.0).collect());
    let cfg = ChannelConfig::awgn(25.0);
    let y1 = transmit(&x, &codec, &cfg, &mut rng::master(99)).unwrap();
    let y2 = transmit(&x, &codec, &cfg, &mut rng::master(99)).unwrap();
    assert_eq!(y1.data(), y2.data());
}

#[test]
fn overfit_one_sample_reaches_low_mse() {
    // identity-capable codec (CR 1) on a noiseless channel, trained to
    // convergence on a single image
    let shape = SignalShape::new(8, 8, 1);
    let arch = CodecArch::for_shape(shape, 1.0, 6, 8).unwrap();
    let codec = Codec::<f64>::new(arch, &mut rng::master(17));
    let x = Signal::new(
        shape,
        (0..64)
            .map(|i| 0.1 + 0.8 * (((i * 7 + 3) % 13) as f64 / 13.0))
            .collect::<Vec<f64>>(),
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 400,
        batch_size: 1,
        lr_codec: 3e-3,
        lr_gen: 1e-3,
        seed: 7,
        snr_db: f64::INFINITY,
        weights: LossWeights::default(),
    };
    let (trained, trace) = train_clean(&cfg, std::slice::from_ref(&x), codec).unwrap();
    let y = transmit(&x, &trained, &ChannelConfig::noiseless(), &mut rng::master(0)).unwrap();
    let mse = semcom_core::metrics::mse(&x, &y).unwrap();
    assert!(
        mse < 1e-3,
        "overfit MSE {mse}; final loss {:?}",
        trace.epochs.last()
    );
}

#[test]
fn zero_epochs_returns_initial_params() {
    let shape = SignalShape::new(8, 8, 1);
    let arch = CodecArch::for_shape(shape, 0.25, 2, 2).unwrap();
    let codec = Codec::<f64>::new(arch, &mut rng::master(17));
    let x = Signal::from_clamped(shape, vec![0.5; 64]);
    let before = transmit(&x, &codec, &ChannelConfig::noiseless(), &mut rng::master(0)).unwrap();
    let cfg = TrainConfig {
        epochs: 0,
        batch_size: 1,
        lr_codec: 1e-3,
        lr_gen: 1e-3,
        seed: 7,
        snr_db: f64::INFINITY,
        weights: LossWeights::default(),
    };
    let (after, trace) = train_clean(&cfg, std::slice::from_ref(&x), codec).unwrap();
    assert!(trace.epochs.is_empty());
    let y = transmit(&x, &after, &ChannelConfig::noiseless(), &mut rng::master(0)).unwrap();
    assert_eq!(before.data(), y.data());
}

#[test]
fn clean_training_loss_trends_down() {
    let shape = SignalShape::new(8, 8, 1);
    let arch = CodecArch::for_shape(shape, 0.5, 4, 8).unwrap();
    let codec = Codec::<f64>::new(arch, &mut rng::master(3));
    let mut r = rng::master(role_seed());
    let train: Vec<Signal<f64>> = (0..16)
        .map(|_| {
            Signal::new(
                shape,
                (0..64).map(|_| rand::Rng::gen::<f64>(&mut r)).collect::<Vec<f64>>(),
            )
            .unwrap()
        })
        .collect();
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 8,
        lr_codec: 2e-3,
        lr_gen: 1e-3,
        seed: 5,
        snr_db: 25.0,
        weights: LossWeights::default(),
    };
    let (_, trace) = train_clean(&cfg, &train, codec).unwrap();
    // trend over 10-epoch averages, no strict per-epoch monotonicity
    let avg = |range: std::ops::Range<usize>| {
        range.clone().map(|i| trace.epochs[i].loss_b).sum::<f64>() / range.len() as f64
    };
    assert!(avg(20..30) < avg(0..10), "loss not trending down: {trace:?}");
}

fn role_seed() -> u64 {
    61
}
