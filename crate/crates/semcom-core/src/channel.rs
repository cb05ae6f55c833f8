//! Channel-facing math: power normalization, SNR/noise conversion, and the
//! additive white Gaussian noise channel (identity transfer matrix).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelKind {
    Awgn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Signal-to-noise ratio in decibels. `f64::INFINITY` is the noiseless
    /// sentinel used by tests and sanity checks.
    pub snr_db: f64,
    pub kind: ChannelKind,
}

impl ChannelConfig {
    pub fn awgn(snr_db: f64) -> Self {
        ChannelConfig {
            snr_db,
            kind: ChannelKind::Awgn,
        }
    }

    pub fn noiseless() -> Self {
        Self::awgn(f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(CoreError::Config(format!("invalid snr_db {}", self.snr_db)));
        }
        Ok(())
    }
}

/// Symbols ready for the channel, with their per-symbol signal power
/// (mean square of the entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSymbols<T> {
    pub data: Vec<T>,
    pub power: T,
}

/// Projects a nonzero vector onto the unit L2 sphere.
pub fn power_normalize<T: Scalar>(h: &[T]) -> Result<ChannelSymbols<T>> {
    let norm_sq: T = h.iter().map(|&v| v * v).sum();
    if norm_sq <= T::zero() || !norm_sq.is_finite() {
        return Err(CoreError::DegenerateInput(
            "cannot power-normalize a zero or non-finite vector".into(),
        ));
    }
    let norm = norm_sq.sqrt();
    let data: Vec<T> = h.iter().map(|&v| v / norm).collect();
    let power = T::one() / T::from_usize(h.len());
    Ok(ChannelSymbols { data, power })
}

/// Noise variance for a target SNR: signal_power / 10^(snr_db/10).
pub fn noise_variance(snr_db: f64, signal_power: f64) -> Result<f64> {
    if !(signal_power > 0.0) {
        return Err(CoreError::Domain(format!(
            "signal power must be positive, got {signal_power}"
        )));
    }
    Ok(signal_power / 10f64.powf(snr_db / 10.0))
}

/// Passes symbols through the AWGN channel: y = X + n, n ~ N(0, var·I) with
/// var = noise_variance(snr, per-symbol power of X).
pub fn awgn_transmit<T: Scalar, R: Rng + ?Sized>(
    symbols: &ChannelSymbols<T>,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<Vec<T>> {
    cfg.validate()?;
    if cfg.snr_db == f64::INFINITY {
        return Ok(symbols.data.clone());
    }
    let var = noise_variance(cfg.snr_db, symbols.power.to_f64())?;
    let std = T::from_f64(var.sqrt());
    Ok(symbols
        .data
        .iter()
        .map(|&v| v + std * T::std_normal(rng))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn normalize_three_four() {
        let s = power_normalize(&[3.0f64, 4.0]).unwrap();
        assert!((s.data[0] - 0.6).abs() < 1e-12);
        assert!((s.data[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn unit_vector_is_fixed_point() {
        let s = power_normalize(&[1.0f64, 0.0, 0.0]).unwrap();
        assert_eq!(s.data, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(
            power_normalize(&[0.0f64, 0.0]),
            Err(CoreError::DegenerateInput(_))
        ));
    }

    #[test]
    fn noise_variance_at_zero_db_is_power() {
        assert_eq!(noise_variance(0.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn noise_variance_rejects_nonpositive_power() {
        assert!(noise_variance(10.0, 0.0).is_err());
        assert!(noise_variance(10.0, -1.0).is_err());
    }

    #[test]
    fn noiseless_sentinel_is_identity() {
        let s = power_normalize(&[1.0f64, 2.0, 2.0]).unwrap();
        let mut r = rng::master(0);
        let y = awgn_transmit(&s, &ChannelConfig::noiseless(), &mut r).unwrap();
        assert_eq!(y, s.data);
    }

    #[test]
    fn awgn_is_reproducible_under_fixed_seed() {
        let s = power_normalize(&[1.0f64; 64]).unwrap();
        let cfg = ChannelConfig::awgn(10.0);
        let a = awgn_transmit(&s, &cfg, &mut rng::master(9)).unwrap();
        let b = awgn_transmit(&s, &cfg, &mut rng::master(9)).unwrap();
        assert_eq!(a, b);
    }
}
