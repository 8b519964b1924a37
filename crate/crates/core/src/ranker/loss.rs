//! Focal-weighted binary cross-entropy with a penalty on confident negatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Class weight of positives; negatives get `1 - alpha`.
    pub alpha: f64,
    /// Focusing exponent.
    pub beta: f64,
    /// Scale of the penalty on negatives predicted with high probability.
    pub lambda_penalty: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.75,
            beta: 2.0,
            lambda_penalty: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::ConfigInvalid(format!("alpha {} not in (0,1)", self.alpha)));
        }
        if !(self.beta >= 0.0) || !(self.lambda_penalty >= 0.0) {
            return Err(Error::ConfigInvalid("beta and lambda_penalty must be >= 0".into()));
        }
        Ok(())
    }
}

/// The four factors of the per-sample loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms<T> {
    pub bce: T,
    pub focal: T,
    pub class: T,
    pub penalty: T,
}

impl<T: Scalar> LossTerms<T> {
    pub fn product(&self) -> T {
        self.class * self.focal * self.bce * self.penalty
    }
}

/// Cross-entropy on the logit, `max(0,z) - z*y + ln(1 + e^-|z|)`.
pub fn bce_with_logits<T: Scalar>(z: T, y: bool) -> T {
    let yz = if y { z } else { T::zero() };
    z.max(T::zero()) - yz + (-z.abs()).exp().ln_1p()
}

pub fn loss_terms<T: Scalar>(z: T, y: bool, cfg: &LossConfig) -> LossTerms<T> {
    let one = T::one();
    let p = sigmoid(z);
    // sigmoid(-z) rather than 1 - p: no cancellation for large positive z.
    let p_true = if y { p } else { sigmoid(-z) };
    let alpha = T::of(cfg.alpha);
    LossTerms {
        bce: bce_with_logits(z, y),
        focal: one - p_true.powf(T::of(cfg.beta)),
        class: if y { alpha } else { one - alpha },
        penalty: if y { one } else { p * T::of(cfg.lambda_penalty) + one },
    }
}

/// Per-sample loss: class weight × focal weight × cross-entropy × penalty.
pub fn loss<T: Scalar>(z: T, y: bool, cfg: &LossConfig) -> T {
    loss_terms(z, y, cfg).product()
}

/// Loss and its derivative with respect to the logit.
pub fn loss_and_dz<T: Scalar>(z: T, y: bool, cfg: &LossConfig) -> (T, T) {
    let one = T::one();
    let t = loss_terms(z, y, cfg);
    let p = sigmoid(z);
    let q = sigmoid(-z);
    let dp = p * q;
    let yv = if y { one } else { T::zero() };
    let p_true = if y { p } else { q };
    let beta = T::of(cfg.beta);

    let d_bce = p - yv;
    // d(p_true)/dz = (2y - 1) * dp
    let d_p_true = if y { dp } else { -dp };
    let d_focal = if cfg.beta == 0.0 || p_true.is_zero() {
        T::zero()
    } else {
        -beta * p_true.powf(beta - one) * d_p_true
    };
    let d_penalty = if y { T::zero() } else { T::of(cfg.lambda_penalty) * dp };

    let dz = t.class
        * (d_focal * t.bce * t.penalty + t.focal * d_bce * t.penalty + t.focal * t.bce * d_penalty);
    (t.product(), dz)
}

/// Mean loss over a batch of `(logit, label)` pairs.
pub fn batch_loss<T: Scalar>(batch: &[(T, bool)], cfg: &LossConfig) -> T {
    if batch.is_empty() {
        return T::zero();
    }
    let sum: T = batch.iter().map(|&(z, y)| loss(z, y, cfg)).sum();
    sum / T::of(batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn cfg(alpha: f64, beta: f64, lambda_penalty: f64) -> LossConfig {
        LossConfig { alpha, beta, lambda_penalty }
    }

    #[test]
    fn zero_beta_zeroes_the_loss() {
        assert_eq!(loss(0.0, true, &cfg(0.5, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn analytic_values_at_zero_logit() {
        let v = loss(0.0, true, &cfg(0.5, 1.0, 0.0));
        assert!((v - 0.25 * LN_2).abs() < 1e-15);
        assert!((v - 0.1733).abs() < 1e-4);

        let v = loss(0.0, false, &cfg(0.25, 2.0, 4.0));
        assert!((v - 0.75 * 0.75 * LN_2 * 3.0).abs() < 1e-15);
        assert!((v - 1.16969).abs() < 1e-5);
    }

    #[test]
    fn positives_are_never_penalized() {
        for z in [-5.0, 0.0, 3.0] {
            for lam in [0.0, 1.0, 10.0] {
                assert_eq!(loss_terms(z, true, &cfg(0.3, 2.0, lam)).penalty, 1.0);
            }
        }
    }

    #[test]
    fn bce_matches_log_form_and_stays_finite() {
        for &z in &[-20.0f64, -3.5, -0.1, 0.0, 0.7, 12.0, 20.0] {
            for y in [false, true] {
                // 1 - σ(z) = σ(-z), evaluated without cancellation
                let direct = if y { -sigmoid(z).ln() } else { -sigmoid(-z).ln() };
                assert!((bce_with_logits(z, y) - direct).abs() < 1e-9, "z={z} y={y}");
            }
        }
        for z in [-500.0f64, 500.0] {
            for y in [false, true] {
                assert!(loss(z, y, &cfg(0.25, 2.0, 3.0)).is_finite());
                assert!(loss_and_dz(z, y, &cfg(0.25, 0.5, 3.0)).1.is_finite());
            }
        }
    }

    #[test]
    fn dz_matches_finite_differences() {
        let h = 1e-6;
        for &(alpha, beta, lam) in &[(0.25, 2.0, 4.0), (0.6, 0.5, 0.0), (0.5, 1.0, 1.0), (0.9, 0.0, 2.0)] {
            let c = cfg(alpha, beta, lam);
            for &z in &[-4.0f64, -0.3, 0.2, 2.5] {
                for y in [false, true] {
                    let fd = (loss(z + h, y, &c) - loss(z - h, y, &c)) / (2.0 * h);
                    let (_, dz) = loss_and_dz(z, y, &c);
                    assert!((fd - dz).abs() < 1e-7 * (1.0 + dz.abs()), "{c:?} z={z} y={y}: {fd} vs {dz}");
                }
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let v: f32 = loss(0.0f32, true, &cfg(0.5, 1.0, 0.0));
        assert!((f64::from(v) - 0.25 * LN_2).abs() < 1e-7);
    }

    #[test]
    fn validation_rejects_out_of_range() {
        assert!(cfg(0.0, 1.0, 1.0).validate().is_err());
        assert!(cfg(0.5, -1.0, 1.0).validate().is_err());
        assert!(cfg(0.5, 1.0, f64::NAN).validate().is_err());
        assert!(LossConfig::default().validate().is_ok());
    }
}
