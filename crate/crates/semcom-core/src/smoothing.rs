//! Certified smoothing defense: Monte-Carlo smoothed transmission, smoothed
//! attack judgment with a majority vote, the Lipschitz constant of the
//! smoothed transmitter, and the certified L2 radius built from an exact
//! binomial lower bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::metrics::{judge, JudgmentCalibration};
use crate::poison::lanes;
use crate::rng::substream;
use crate::scalar::Scalar;
use crate::signal::Signal;
use crate::stats::{beta_quantile, inv_std_normal_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Gaussian noise standard deviation.
    pub sigma: f64,
    /// Monte-Carlo draws per input.
    pub n_samples: usize,
    /// Confidence level for the probability lower bound.
    pub alpha: f64,
    /// Master seed; each draw uses its own substream.
    pub seed: u64,
    /// Project noisy inputs to [0,1] before transmission (deployed path).
    /// The unprojected mode exists for the Lipschitz empirical check.
    pub project: bool,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            sigma: 0.25,
            n_samples: 100,
            alpha: 0.001,
            seed: 0,
            project: true,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(CoreError::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.n_samples == 0 {
            return Err(CoreError::Config("n_samples must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CoreError::Config(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    /// Correct transmission (successful defense).
    Benign,
    /// Registered attack.
    Attack,
    /// Majority benign but the lower bound cannot certify a radius.
    Abstain,
}

impl Decision {
    pub fn as_bit(&self) -> u8 {
        match self {
            Decision::Benign | Decision::Abstain => 0,
            Decision::Attack => 1,
        }
    }
}

/// Outcome of certifying one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationResult {
    pub decision: Decision,
    /// Draws judged benign.
    pub n0: usize,
    pub n: usize,
    pub sigma: f64,
    pub alpha: f64,
    /// Exact lower confidence bound on P[judgment = 0].
    pub p0_lower: f64,
    /// Certified L2 radius; 0 when Attack or Abstain.
    pub radius: f64,
}

impl CertificationResult {
    /// Flat JSON record used by the batch-certification outputs.
    pub fn to_json(&self) -> String {
        format!(
            "{{\"decision\":{},\"n0\":{},\"N\":{},\"alpha\":{},\"sigma\":{},\"p0_lower\":{},\"radius\":{}}}",
            self.decision.as_bit(),
            self.n0,
            self.n,
            self.alpha,
            self.sigma,
            self.p0_lower,
            self.radius
        )
    }
}

/// Draws the j-th noisy version of x: x + ε_j, optionally projected to [0,1].
fn noisy_input<T: Scalar>(x: &[T], cfg: &SmoothingConfig, draw: u64) -> Vec<T> {
    let mut rng = substream(cfg.seed, lanes::SMOOTHING, draw);
    let sigma = T::from_f64(cfg.sigma);
    x.iter()
        .map(|&v| {
            let noisy = v + sigma * T::std_normal(&mut rng);
            if cfg.project {
                noisy.max(T::zero()).min(T::one())
            } else {
                noisy
            }
        })
        .collect()
}

/// Monte-Carlo estimate of the smoothed transmitter: the mean reconstruction
/// over `n_samples` noise draws. `f(draw_index, noisy_input)` must be the
/// base transmit path (it owns its channel-noise substreams).
pub fn smooth_transmit<T, F>(f: F, x: &Signal<T>, cfg: &SmoothingConfig) -> Result<Signal<T>>
where
    T: Scalar,
    F: Fn(u64, &[T]) -> Result<Vec<T>> + Sync,
{
    let (mean, _) = smooth_transmit_stats(&f, x.data(), cfg)?;
    Ok(Signal::from_clamped(
        x.shape(),
        mean.into_iter().map(T::from_f64).collect(),
    ))
}

/// Mean and per-pixel standard error of the smoothed output, in f64.
pub fn smooth_transmit_stats<T, F>(
    f: &F,
    x: &[T],
    cfg: &SmoothingConfig,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    T: Scalar,
    F: Fn(u64, &[T]) -> Result<Vec<T>> + Sync,
{
    cfg.validate()?;
    let n = cfg.n_samples;
    let outputs: Vec<Vec<T>> = (0..n as u64)
        .into_par_iter()
        .map(|j| f(j, &noisy_input(x, cfg, j)))
        .collect::<Result<Vec<_>>>()?;
    let d = x.len();
    let mut mean = vec![0.0f64; d];
    let mut m2 = vec![0.0f64; d];
    // Welford in fixed draw order for deterministic aggregation
    for (count, y) in outputs.iter().enumerate() {
        let c = (count + 1) as f64;
        for (i, &v) in y.iter().enumerate() {
            let v = v.to_f64();
            let delta = v - mean[i];
            mean[i] += delta / c;
            m2[i] += delta * (v - mean[i]);
        }
    }
    let sem: Vec<f64> = m2
        .iter()
        .map(|&s| {
            if n > 1 {
                (s / (n - 1) as f64 / n as f64).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok((mean, sem))
}

/// Smoothed judgment: majority vote over per-draw judgments, ties broken
/// toward Attack. Returns (decision bit, count of benign draws).
pub fn smoothed_judgment<T, F>(
    f: F,
    x: &Signal<T>,
    targets: &[Signal<T>],
    cal: &JudgmentCalibration,
    cfg: &SmoothingConfig,
) -> Result<(u8, usize)>
where
    T: Scalar,
    F: Fn(u64, &[T]) -> Result<Vec<T>> + Sync,
{
    cfg.validate()?;
    let n = cfg.n_samples;
    let shape = x.shape();
    let judgments: Vec<u8> = (0..n as u64)
        .into_par_iter()
        .map(|j| {
            let y = f(j, &noisy_input(x.data(), cfg, j))?;
            judge(&Signal::from_clamped(shape, y), targets, cal)
        })
        .collect::<Result<Vec<_>>>()?;
    let n0 = judgments.iter().filter(|&&j| j == 0).count();
    let n1 = n - n0;
    Ok((if n1 >= n0 { 1 } else { 0 }, n0))
}

/// Lipschitz constant of the smoothed transmitter: sqrt(2 / (pi sigma^2)).
pub fn lipschitz_bound(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(CoreError::Domain(format!("sigma must be positive, got {sigma}")));
    }
    Ok((2.0 / (std::f64::consts::PI * sigma * sigma)).sqrt())
}

/// One-sided exact (Clopper-Pearson) binomial lower confidence bound on the
/// benign-judgment probability at level 1 - alpha.
pub fn lower_confidence_bound(n0: usize, n: usize, alpha: f64) -> Result<f64> {
    if n0 > n || n == 0 {
        return Err(CoreError::Domain(format!("invalid counts n0={n0}, N={n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CoreError::Domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if n0 == 0 {
        return Ok(0.0);
    }
    beta_quantile(alpha, n0 as f64, (n - n0 + 1) as f64)
}

/// Certified radius R = sigma * Φ⁻¹(p0_lower) when p0_lower > 1/2;
/// otherwise 0 with the abstain flag set.
pub fn certified_radius(p0_lower: f64, sigma: f64) -> Result<(f64, bool)> {
    if !(0.0..=1.0).contains(&p0_lower) {
        return Err(CoreError::Domain(format!("p0_lower {p0_lower} outside [0,1]")));
    }
    if !(sigma > 0.0) {
        return Err(CoreError::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if p0_lower > 0.5 {
        Ok((sigma * inv_std_normal_cdf(p0_lower)?, false))
    } else {
        Ok((0.0, true))
    }
}

/// Full certification of one input: smoothed judgment, exact lower bound,
/// certified radius. Any x' within L2 distance `radius` of x keeps the
/// smoothed judgment at 0.
pub fn certify<T, F>(
    f: F,
    x: &Signal<T>,
    targets: &[Signal<T>],
    cal: &JudgmentCalibration,
    cfg: &SmoothingConfig,
) -> Result<CertificationResult>
where
    T: Scalar,
    F: Fn(u64, &[T]) -> Result<Vec<T>> + Sync,
{
    let (bit, n0) = smoothed_judgment(&f, x, targets, cal, cfg)?;
    let p0_lower = lower_confidence_bound(n0, cfg.n_samples, cfg.alpha)?;
    let (radius, abstained) = certified_radius(p0_lower, cfg.sigma)?;
    let decision = if bit == 1 {
        Decision::Attack
    } else if abstained {
        Decision::Abstain
    } else {
        Decision::Benign
    };
    let radius = if decision == Decision::Benign { radius } else { 0.0 };
    Ok(CertificationResult {
        decision,
        n0,
        n: cfg.n_samples,
        sigma: cfg.sigma,
        alpha: cfg.alpha,
        p0_lower,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SignalShape;

    #[test]
    fn lipschitz_values() {
        let l = lipschitz_bound(0.25).unwrap();
        assert!((l - 3.1915).abs() < 1e-3);
        let unit = lipschitz_bound((2.0 / std::f64::consts::PI).sqrt()).unwrap();
        assert!((unit - 1.0).abs() < 1e-12);
        let half = lipschitz_bound(0.5).unwrap();
        assert!((l / half - 2.0).abs() < 1e-12);
        assert!(lipschitz_bound(0.0).is_err());
    }

    #[test]
    fn lcb_closed_form_and_bounds() {
        assert_eq!(lower_confidence_bound(0, 100, 0.001).unwrap(), 0.0);
        let b = lower_confidence_bound(100, 100, 0.001).unwrap();
        let closed = 0.001f64.powf(0.01);
        assert!((b - closed).abs() < 1e-3, "{b} vs {closed}");
        for n0 in 0..=20usize {
            let v = lower_confidence_bound(n0, 20, 0.05).unwrap();
            assert!(v <= n0 as f64 / 20.0 + 1e-12);
        }
    }

    #[test]
    fn radius_trivial_cases() {
        assert_eq!(certified_radius(0.5, 0.25).unwrap(), (0.0, true));
        assert_eq!(certified_radius(0.3, 0.25).unwrap(), (0.0, true));
        let (r, a) = certified_radius(0.9, 0.25).unwrap();
        assert!(!a);
        assert!((r - 0.3204).abs() < 1e-3);
    }

    #[test]
    fn constant_transmitter_is_its_own_smoothing() {
        let shape = SignalShape::new(8, 8, 1);
        let c = vec![0.42f64; 64];
        let cexp = c.clone();
        let f = move |_j: u64, _x: &[f64]| Ok(cexp.clone());
        let x = Signal::from_clamped(shape, vec![0.5; 64]);
        let cfg = SmoothingConfig {
            n_samples: 16,
            ..Default::default()
        };
        let s = smooth_transmit(f, &x, &cfg).unwrap();
        assert!(s.data().iter().all(|&v| (v - 0.42).abs() < 1e-12));
    }

    #[test]
    fn identity_transmitter_smoothing_stays_near_x() {
        // x deep inside [0,1], small sigma, no projection binding
        let shape = SignalShape::new(8, 8, 1);
        let x = Signal::from_clamped(shape, vec![0.5f64; 64]);
        let cfg = SmoothingConfig {
            sigma: 0.01,
            n_samples: 400,
            seed: 3,
            ..Default::default()
        };
        let f = |_j: u64, v: &[f64]| Ok(v.to_vec());
        let s = smooth_transmit(f, &x, &cfg).unwrap();
        let tol = 3.0 * 0.01 / (400f64).sqrt() + 1e-6;
        assert!(s
            .data()
            .iter()
            .zip(x.data())
            .all(|(a, b)| (a - b).abs() <= tol * 4.0));
    }

    #[test]
    fn unanimous_attack_draws() {
        let shape = SignalShape::new(28, 28, 1);
        let target = Signal::from_clamped(shape, (0..784).map(|i| ((i / 28 + i % 28) % 9) as f64 / 9.0).collect());
        let tgt = target.clone();
        // transmitter that always outputs the target
        let f = move |_j: u64, _x: &[f64]| Ok(tgt.data().to_vec());
        let cal = JudgmentCalibration {
            tau: 0.5,
            mu: 0.6,
            sigma_stat: 0.0333,
            n_calibration: 30,
            mode: crate::metrics::CalibrationMode::Pooled,
            tau_per_target: vec![0.5],
            per_target_ssims: vec![vec![0.6]],
        };
        let x = Signal::from_clamped(shape, vec![0.5; 784]);
        let cfg = SmoothingConfig {
            n_samples: 9,
            ..Default::default()
        };
        let (bit, n0) = smoothed_judgment(&f, &x, std::slice::from_ref(&target), &cal, &cfg).unwrap();
        assert_eq!((bit, n0), (1, 0));
        let cert = certify(&f, &x, std::slice::from_ref(&target), &cal, &cfg).unwrap();
        assert_eq!(cert.decision, Decision::Attack);
        assert_eq!(cert.radius, 0.0);
    }

    #[test]
    fn exact_tie_decides_attack() {
        // judgments alternate via a transmitter keyed on the draw index
        let shape = SignalShape::new(28, 28, 1);
        let target = Signal::from_clamped(shape, (0..784).map(|i| ((i / 28 + i % 28) % 9) as f64 / 9.0).collect());
        let tgt = target.clone();
        let benign_out = vec![0.5f64; 784];
        let f = move |j: u64, _x: &[f64]| {
            if j % 2 == 0 {
                Ok(tgt.data().to_vec())
            } else {
                Ok(benign_out.clone())
            }
        };
        let cal = JudgmentCalibration {
            tau: 0.9,
            mu: 0.95,
            sigma_stat: 0.0166,
            n_calibration: 30,
            mode: crate::metrics::CalibrationMode::Pooled,
            tau_per_target: vec![0.9],
            per_target_ssims: vec![vec![0.95]],
        };
        let x = Signal::from_clamped(shape, vec![0.5; 784]);
        let cfg = SmoothingConfig {
            n_samples: 10,
            ..Default::default()
        };
        let (bit, n0) = smoothed_judgment(&f, &x, std::slice::from_ref(&target), &cal, &cfg).unwrap();
        assert_eq!(n0, 5);
        assert_eq!(bit, 1, "tie must decide attack");
    }

    #[test]
    fn weaker_alpha_never_shrinks_radius() {
        let tight = lower_confidence_bound(95, 100, 0.001).unwrap();
        let loose = lower_confidence_bound(95, 100, 0.01).unwrap();
        assert!(loose >= tight);
    }
}
