//! Scalar image-quality and attack metrics, plus the attack-judgment
//! function and its threshold calibration.
//!
//! All metrics compute in double precision regardless of the pipeline
//! scalar type, and are pure functions safe for parallel use.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::signal::Signal;

pub const SSIM_C1: f64 = 1e-4; // (0.01 * MAX)^2 with MAX = 1
pub const SSIM_C2: f64 = 9e-4; // (0.03 * MAX)^2
const SSIM_SIGMA: f64 = 1.5;

fn check_same_shape<T: Scalar>(a: &Signal<T>, b: &Signal<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(CoreError::Config(format!(
            "shape mismatch: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean squared error over all entries.
pub fn mse<T: Scalar>(a: &Signal<T>, b: &Signal<T>) -> Result<f64> {
    check_same_shape(a, b)?;
    Ok(mse_raw(a.data(), b.data()))
}

pub fn mse_raw<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.to_f64() - y.to_f64();
            d * d
        })
        .sum();
    s / a.len() as f64
}

/// Peak signal-to-noise ratio in dB with MAX = 1. Identical inputs return
/// the +infinity sentinel.
pub fn psnr<T: Scalar>(a: &Signal<T>, b: &Signal<T>) -> Result<f64> {
    check_same_shape(a, b)?;
    Ok(psnr_from_mse(mse_raw(a.data(), b.data())))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// Window width used for a given image: 11 for >= 32 px, 7 below.
pub fn ssim_window_for(height: usize, width: usize) -> usize {
    if height.min(width) >= 32 {
        11
    } else {
        7
    }
}

fn gaussian_window(k: usize) -> Vec<f64> {
    let c = (k as f64 - 1.0) / 2.0;
    let mut w = vec![0.0; k * k];
    let mut sum = 0.0;
    for i in 0..k {
        for j in 0..k {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            let v = (-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[i * k + j] = v;
            sum += v;
        }
    }
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Mean local SSIM with a Gaussian window over all valid window positions,
/// averaged across channels. Symmetric in its arguments; range (-1, 1].
pub fn ssim<T: Scalar>(a: &Signal<T>, b: &Signal<T>) -> Result<f64> {
    check_same_shape(a, b)?;
    let s = a.shape();
    ssim_raw(a.data(), b.data(), s.height, s.width, s.channels)
}

pub fn ssim_raw<T: Scalar>(a: &[T], b: &[T], h: usize, w: usize, c: usize) -> Result<f64> {
    let k = ssim_window_for(h, w);
    if k > h || k > w {
        return Err(CoreError::Config(format!(
            "SSIM window {k} does not fit {h}x{w} image"
        )));
    }
    let win = gaussian_window(k);
    Ok(ssim_core(a, b, h, w, c, k, &win, None))
}

/// SSIM plus the gradient of the mean SSIM with respect to the second image.
pub fn ssim_with_grad<T: Scalar>(
    a: &[T],
    b: &[T],
    h: usize,
    w: usize,
    c: usize,
) -> Result<(f64, Vec<T>)> {
    let k = ssim_window_for(h, w);
    if k > h || k > w {
        return Err(CoreError::Config(format!(
            "SSIM window {k} does not fit {h}x{w} image"
        )));
    }
    let win = gaussian_window(k);
    let mut grad = vec![0.0f64; b.len()];
    let v = ssim_core(a, b, h, w, c, k, &win, Some(&mut grad));
    Ok((v, grad.into_iter().map(T::from_f64).collect()))
}

/// Direct windowed SSIM; optionally accumulates d(mean SSIM)/d(b).
fn ssim_core<T: Scalar>(
    a: &[T],
    b: &[T],
    h: usize,
    w: usize,
    c: usize,
    k: usize,
    win: &[f64],
    mut grad_b: Option<&mut [f64]>,
) -> f64 {
    let oh = h - k + 1;
    let ow = w - k + 1;
    let positions = (oh * ow * c) as f64;
    let mut total = 0.0;
    for ch in 0..c {
        let pa = &a[ch * h * w..(ch + 1) * h * w];
        let pb = &b[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut mx = 0.0;
                let mut my = 0.0;
                let mut sxx = 0.0;
                let mut syy = 0.0;
                let mut sxy = 0.0;
                for ki in 0..k {
                    let ra = &pa[(oy + ki) * w + ox..(oy + ki) * w + ox + k];
                    let rb = &pb[(oy + ki) * w + ox..(oy + ki) * w + ox + k];
                    let rw = &win[ki * k..(ki + 1) * k];
                    for kj in 0..k {
                        let wv = rw[kj];
                        let xv = ra[kj].to_f64();
                        let yv = rb[kj].to_f64();
                        mx += wv * xv;
                        my += wv * yv;
                        sxx += wv * xv * xv;
                        syy += wv * yv * yv;
                        sxy += wv * xv * yv;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cxy = sxy - mx * my;
                let a1 = 2.0 * mx * my + SSIM_C1;
                let a2 = 2.0 * cxy + SSIM_C2;
                let b1 = mx * mx + my * my + SSIM_C1;
                let b2 = vx + vy + SSIM_C2;
                let s = (a1 * a2) / (b1 * b2);
                total += s;
                if let Some(g) = grad_b.as_deref_mut() {
                    // dS/dmy, dS/dvy, dS/dcxy; then chain to pixels
                    let d_my = (2.0 * mx * a2) / (b1 * b2) - s * (2.0 * my) / b1;
                    let d_vy = -s / b2;
                    let d_cxy = (2.0 * a1) / (b1 * b2);
                    let gp = &mut g[ch * h * w..(ch + 1) * h * w];
                    for ki in 0..k {
                        let base = (oy + ki) * w + ox;
                        let ra = &pa[base..base + k];
                        let rb = &pb[base..base + k];
                        let rw = &win[ki * k..(ki + 1) * k];
                        for kj in 0..k {
                            let wv = rw[kj];
                            let xv = ra[kj].to_f64();
                            let yv = rb[kj].to_f64();
                            // dmy/dy = w; dvy/dy = 2w(y - my); dcxy/dy = w(x - mx)
                            let d = wv * (d_my + d_vy * 2.0 * (yv - my) + d_cxy * (xv - mx));
                            gp[base + kj] += d / positions;
                        }
                    }
                }
            }
        }
    }
    total / positions
}

/// Continuous Tanimoto coefficient over flattened tensors:
/// <a,b> / (||a||^2 + ||b||^2 - <a,b>).
pub fn tanimoto<T: Scalar>(a: &Signal<T>, b: &Signal<T>) -> Result<f64> {
    check_same_shape(a, b)?;
    tanimoto_raw(a.data(), b.data()).map(|(v, _, _, _)| v)
}

fn tanimoto_raw<T: Scalar>(a: &[T], b: &[T]) -> Result<(f64, f64, f64, f64)> {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.to_f64(), y.to_f64());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let denom = na + nb - dot;
    if na == 0.0 && nb == 0.0 {
        return Err(CoreError::DegenerateInput(
            "tanimoto undefined for two zero tensors".into(),
        ));
    }
    Ok((dot / denom, dot, na, nb))
}

/// Tanimoto plus gradient with respect to the second tensor.
pub fn tanimoto_with_grad<T: Scalar>(a: &[T], b: &[T]) -> Result<(f64, Vec<T>)> {
    let (tc, dot, na, nb) = tanimoto_raw(a, b)?;
    // d(tc)/dy_i = [x_i*denom - dot*(2y_i - x_i)] / denom^2
    let denom = na + nb - dot;
    let g: Vec<T> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (x, y) = (x.to_f64(), y.to_f64());
            T::from_f64((x * denom - dot * (2.0 * y - x)) / (denom * denom))
        })
        .collect();
    Ok((tc, g))
}

/// Cosine similarity over flattened tensors.
pub fn cosine_sim<T: Scalar>(a: &Signal<T>, b: &Signal<T>) -> Result<f64> {
    check_same_shape(a, b)?;
    cosine_raw(a.data(), b.data()).map(|(v, ..)| v)
}

fn cosine_raw<T: Scalar>(a: &[T], b: &[T]) -> Result<(f64, f64, f64, f64)> {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.to_f64(), y.to_f64());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(CoreError::DegenerateInput(
            "cosine similarity undefined for a zero tensor".into(),
        ));
    }
    Ok((dot / (na.sqrt() * nb.sqrt()), dot, na, nb))
}

/// Cosine similarity plus gradient with respect to the second tensor.
pub fn cosine_with_grad<T: Scalar>(a: &[T], b: &[T]) -> Result<(f64, Vec<T>)> {
    let (cs, _dot, na, nb) = cosine_raw(a, b)?;
    let (sa, sb) = (na.sqrt(), nb.sqrt());
    let g: Vec<T> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (x, y) = (x.to_f64(), y.to_f64());
            T::from_f64(x / (sa * sb) - cs * y / nb)
        })
        .collect();
    Ok((cs, g))
}

/// How the τ threshold treats the per-target SSIM populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CalibrationMode {
    /// One τ from all (sample, target) SSIM values pooled together.
    #[default]
    Pooled,
    /// A separate τ_k per target.
    PerTarget,
}

/// Calibrated judgment threshold τ = μ - 3σ over benign-traffic SSIMs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgmentCalibration {
    pub tau: f64,
    pub mu: f64,
    pub sigma_stat: f64,
    pub n_calibration: usize,
    pub mode: CalibrationMode,
    /// τ_k per target when mode is PerTarget (otherwise equal to `tau`).
    pub tau_per_target: Vec<f64>,
    /// Raw SSIM values retained for audit, target-major.
    pub per_target_ssims: Vec<Vec<f64>>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mu = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mu, 0.0);
    }
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1) as f64;
    (mu, var.sqrt())
}

/// Pools benign-traffic SSIM values into τ = μ - 3σ.
/// `per_target` is target-major: per_target[k][i] = SSIM(f(x_i), target_k).
pub fn calibration_from_ssims(
    per_target: Vec<Vec<f64>>,
    mode: CalibrationMode,
) -> Result<JudgmentCalibration> {
    if per_target.is_empty() || per_target.iter().any(|v| v.is_empty()) {
        return Err(CoreError::Config("calibration needs nonempty SSIM sets".into()));
    }
    let n_calibration = per_target[0].len();
    let pooled: Vec<f64> = per_target.iter().flatten().copied().collect();
    let (mu, sigma) = mean_std(&pooled);
    let tau = mu - 3.0 * sigma;
    let tau_per_target = match mode {
        CalibrationMode::Pooled => vec![tau; per_target.len()],
        CalibrationMode::PerTarget => per_target
            .iter()
            .map(|vals| {
                let (m, s) = mean_std(vals);
                m - 3.0 * s
            })
            .collect(),
    };
    Ok(JudgmentCalibration {
        tau,
        mu,
        sigma_stat: sigma,
        n_calibration,
        mode,
        tau_per_target,
        per_target_ssims: per_target,
    })
}

/// Runs benign traffic through the system and calibrates τ.
///
/// `f` maps (sample index, signal) to the reconstruction; the index lets
/// callers derive per-sample noise substreams.
pub fn calibrate_tau<T, F>(
    f: F,
    benign: &[Signal<T>],
    targets: &[Signal<T>],
    mode: CalibrationMode,
) -> Result<JudgmentCalibration>
where
    T: Scalar,
    F: Fn(usize, &Signal<T>) -> Result<Signal<T>> + Sync,
{
    if benign.len() < 30 {
        return Err(CoreError::Config(format!(
            "calibration needs at least 30 benign samples, got {}",
            benign.len()
        )));
    }
    if targets.is_empty() {
        return Err(CoreError::Config("calibration needs at least one target".into()));
    }
    let rows: Vec<Vec<f64>> = benign
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let y = f(i, x)?;
            targets.iter().map(|t| ssim(&y, t)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    // transpose to target-major
    let per_target: Vec<Vec<f64>> = (0..targets.len())
        .map(|k| rows.iter().map(|r| r[k]).collect())
        .collect();
    calibration_from_ssims(per_target, mode)
}

/// Attack judgment: 1 iff max_k SSIM(y, target_k) >= τ (inclusive).
/// 0 denotes correct transmission, 1 denotes a registered attack.
pub fn judge<T: Scalar>(y: &Signal<T>, targets: &[Signal<T>], cal: &JudgmentCalibration) -> Result<u8> {
    for (k, t) in targets.iter().enumerate() {
        if ssim(y, t)? >= cal.tau_per_target[k.min(cal.tau_per_target.len() - 1)] {
            return Ok(1);
        }
    }
    Ok(0)
}

/// Per-target judgment used for ASR_i: does y match the *intended* target?
pub fn judge_intended<T: Scalar>(
    y: &Signal<T>,
    target: &Signal<T>,
    target_index: usize,
    cal: &JudgmentCalibration,
) -> Result<u8> {
    let tau = cal.tau_per_target[target_index.min(cal.tau_per_target.len() - 1)];
    Ok(if ssim(y, target)? >= tau { 1 } else { 0 })
}

/// Attack success rate as a percentage.
pub fn asr(successes: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(CoreError::Domain("ASR needs a positive trial count".into()));
    }
    if successes > total {
        return Err(CoreError::Domain(format!(
            "successes {successes} exceed total {total}"
        )));
    }
    Ok(100.0 * successes as f64 / total as f64)
}

/// Efficiency gap between the clean and backdoored systems (may be negative).
pub fn delta_psnr(psnr_clean: f64, psnr_backdoored: f64) -> f64 {
    psnr_clean - psnr_backdoored
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SignalShape;

    fn sig(h: usize, w: usize, data: Vec<f64>) -> Signal<f64> {
        Signal::new(SignalShape::new(h, w, 1), data).unwrap()
    }

    #[test]
    fn mse_trivial_cases() {
        let a = sig(1, 2, vec![0.0, 0.5]);
        let b = sig(1, 2, vec![0.5, 0.5]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 0.125);
        let z = sig(1, 2, vec![0.0, 0.0]);
        let o = sig(1, 2, vec![1.0, 1.0]);
        assert_eq!(mse(&z, &o).unwrap(), 1.0);
    }

    #[test]
    fn psnr_trivial_cases() {
        assert!((psnr_from_mse(0.01) - 20.0).abs() < 1e-12);
        assert!((psnr_from_mse(0.001) - 30.0).abs() < 1e-12);
        assert_eq!(psnr_from_mse(0.0), f64::INFINITY);
    }

    #[test]
    fn ssim_identity_is_one() {
        let data: Vec<f64> = (0..784).map(|i| (i % 13) as f64 / 13.0).collect();
        let a = sig(28, 28, data);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_window_must_fit() {
        let a = sig(4, 4, vec![0.5; 16]);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn tanimoto_trivial_cases() {
        let a = sig(1, 2, vec![1.0, 0.0]);
        let b = sig(1, 2, vec![0.0, 1.0]);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.0);
        let c = sig(1, 2, vec![1.0, 1.0]);
        assert_eq!(tanimoto(&c, &c).unwrap(), 1.0);
        assert_eq!(tanimoto(&c, &a).unwrap(), 0.5);
        let z = sig(1, 2, vec![0.0, 0.0]);
        assert!(tanimoto(&z, &z).is_err());
    }

    #[test]
    fn cosine_trivial_cases() {
        let a = sig(1, 2, vec![1.0, 1.0]);
        let b = sig(1, 2, vec![1.0, 0.0]);
        assert!((cosine_sim(&a, &b).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
        assert!((cosine_sim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let z = sig(1, 2, vec![0.0, 0.0]);
        assert!(cosine_sim(&a, &z).is_err());
    }

    #[test]
    fn calibration_tau_is_mu_minus_three_sigma() {
        let cal = calibration_from_ssims(vec![vec![0.25, 0.30, 0.35]], CalibrationMode::Pooled).unwrap();
        assert!((cal.mu - 0.30).abs() < 1e-12);
        assert!((cal.tau - (cal.mu - 3.0 * cal.sigma_stat)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_spread_gives_tau_equal_mu() {
        let cal = calibration_from_ssims(vec![vec![0.5; 10]], CalibrationMode::Pooled).unwrap();
        assert_eq!(cal.sigma_stat, 0.0);
        assert_eq!(cal.tau, cal.mu);
    }

    #[test]
    fn judge_boundary_is_inclusive() {
        let t = sig(28, 28, (0..784).map(|i| (i % 7) as f64 / 7.0).collect());
        // identical image has SSIM 1; set tau to exactly 1
        let cal = JudgmentCalibration {
            tau: 1.0,
            mu: 1.0,
            sigma_stat: 0.0,
            n_calibration: 30,
            mode: CalibrationMode::Pooled,
            tau_per_target: vec![1.0],
            per_target_ssims: vec![vec![1.0]],
        };
        assert_eq!(judge(&t, std::slice::from_ref(&t), &cal).unwrap(), 1);
    }

    #[test]
    fn asr_arithmetic() {
        assert_eq!(asr(9992, 10000).unwrap(), 99.92);
        assert_eq!(asr(0, 5).unwrap(), 0.0);
        assert_eq!(asr(5, 5).unwrap(), 100.0);
        assert!(asr(1, 0).is_err());
    }

    #[test]
    fn delta_psnr_examples() {
        assert!((delta_psnr(36.47, 35.92) - 0.55).abs() < 1e-12);
        assert_eq!(delta_psnr(30.0, 30.0), 0.0);
        assert!((delta_psnr(21.47, 19.79) - 1.68).abs() < 1e-12);
    }
}
