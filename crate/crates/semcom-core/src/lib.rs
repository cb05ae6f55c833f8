//! Joint source-channel image transmission with an intensity-graded
//! polymorphic backdoor and a certified smoothing defense.
//!
//! The pipeline: a convolutional encoder compresses an image into a latent
//! semantic vector, symbols are power-normalized onto the unit sphere,
//! pass an AWGN channel, and a mirrored decoder reconstructs the image.
//! A neural trigger generator plants sample-specific perturbations whose
//! *intensity* selects among multiple malicious reconstruction targets;
//! hierarchical loss training implants that behavior while preserving
//! benign fidelity. The defense smooths the transmitter with Gaussian
//! input noise and certifies an L2 radius around benign inputs.
//!
//! All numeric code is generic over the scalar type ([`scalar::Scalar`]);
//! production paths run `f32`, numerical verification runs `f64`.

pub mod channel;
pub mod checkpoint;
pub mod codec;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod poison;
pub mod rng;
pub mod scalar;
pub mod signal;
pub mod smoothing;
pub mod stats;
pub mod tensor;
pub mod training;

pub use channel::{awgn_transmit, noise_variance, power_normalize, ChannelConfig, ChannelKind, ChannelSymbols};
pub use checkpoint::{AttackArtifacts, Checkpoint, FORMAT_VERSION};
pub use codec::{compression_rate, cr_display, encode, transmit, Codec, CodecArch, TrainMeta};
pub use error::{CoreError, Result};
pub use metrics::{
    asr, calibrate_tau, cosine_sim, delta_psnr, judge, judge_intended, mse, psnr, ssim, tanimoto,
    CalibrationMode, JudgmentCalibration,
};
pub use poison::{
    build_poison_sets, generate_trigger, poison_sample, sample_victims, PoisonPlan, PoisonedBatch,
    TargetSet, TriggerGenerator,
};
pub use scalar::Scalar;
pub use signal::{Signal, SignalShape};
pub use smoothing::{
    certified_radius, certify, lipschitz_bound, lower_confidence_bound, smooth_transmit,
    smooth_transmit_stats, smoothed_judgment, CertificationResult, Decision, SmoothingConfig,
};
pub use training::{
    loss_contrastive, loss_imperceptibility, loss_integrity, loss_multi_target, total_loss,
    train_backdoor, train_clean, EpochLoss, LossWeights, TrainConfig, TrainTrace,
};

/// Pipeline scalar used by production code paths.
pub type F = f32;
/// Concrete aliases for the production scalar.
pub type Signal32 = Signal<f32>;
pub type Codec32 = Codec<f32>;
pub type TriggerGenerator32 = TriggerGenerator<f32>;
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision aliases used by oracles and numerical checks.
pub type Signal64 = Signal<f64>;
pub type Codec64 = Codec<f64>;
pub type Tensor64 = tensor::Tensor<f64>;
