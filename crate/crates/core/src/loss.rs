//! Base loss functions, the robustness band, and the RU augmented loss.
//!
//! The RU loss couples a prediction `z` with an auxiliary level `a`:
//!
//! ```text
//! L_RU(z, a, y) = Γ⁻¹·L(z, y) + (1 − Γ⁻¹)·a + (Γ − Γ⁻¹)·(L(z, y) − a)₊
//! ```
//!
//! It is jointly convex in `(z, a)` whenever the base loss is convex in `z`,
//! which is what makes subgradient training of the pair `(h, α)` sound.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("robustness level gamma must be finite and > 1, got {0}")]
    InvalidGamma(f64),
    #[error("non-finite input to {op}: {value}")]
    NonFinite { op: &'static str, value: f64 },
}

/// Base pointwise loss `L(ŷ, y) = ℓ(y − ŷ)` with first and second derivatives
/// in the prediction argument.
///
/// Only the squared loss is shipped; the interface carries the second
/// derivative so that other strongly convex residual losses can plug in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseLoss {
    Squared,
}

impl BaseLoss {
    /// Loss value. Nonnegative, zero at `pred == y`.
    #[inline]
    pub fn value(&self, pred: f64, y: f64) -> f64 {
        match self {
            BaseLoss::Squared => {
                let r = y - pred;
                r * r
            }
        }
    }

    /// First derivative with respect to the prediction.
    #[inline]
    pub fn d1(&self, pred: f64, y: f64) -> f64 {
        match self {
            BaseLoss::Squared => -2.0 * (y - pred),
        }
    }

    /// Second derivative with respect to the prediction.
    #[inline]
    pub fn d2(&self, _pred: f64, _y: f64) -> f64 {
        match self {
            BaseLoss::Squared => 2.0,
        }
    }
}

/// Robustness level `Γ > 1` with the derived coefficients of the RU loss and
/// the quantile level `η(Γ) = Γ/(Γ+1)` at which the worst-case weight function
/// jumps from `Γ⁻¹` to `Γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaBand {
    gamma: f64,
    inv_gamma: f64,
    /// Coefficient of the linear `a` term, `1 − Γ⁻¹`.
    c_lin: f64,
    /// Coefficient of the hinge term, `Γ − Γ⁻¹`.
    c_relu: f64,
    /// Quantile level `Γ/(Γ+1)`, in (1/2, 1).
    eta: f64,
}

impl GammaBand {
    pub fn new(gamma: f64) -> Result<Self, LossError> {
        if !gamma.is_finite() || gamma <= 1.0 {
            return Err(LossError::InvalidGamma(gamma));
        }
        let inv_gamma = 1.0 / gamma;
        Ok(Self {
            gamma,
            inv_gamma,
            c_lin: 1.0 - inv_gamma,
            c_relu: gamma - inv_gamma,
            eta: gamma / (gamma + 1.0),
        })
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn inv_gamma(&self) -> f64 {
        self.inv_gamma
    }

    #[inline]
    pub fn c_lin(&self) -> f64 {
        self.c_lin
    }

    #[inline]
    pub fn c_relu(&self) -> f64 {
        self.c_relu
    }

    #[inline]
    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// RU loss on a precomputed base-loss value.
///
/// Exposed separately because several oracles work directly on loss atoms
/// rather than on `(prediction, outcome)` pairs.
#[inline]
pub fn ru_loss_from_base(base: f64, a: f64, band: &GammaBand) -> f64 {
    band.inv_gamma * base + band.c_lin * a + band.c_relu * (base - a).max(0.0)
}

/// The RU augmented loss `L_RU(z, a, y)`.
pub fn ru_loss(z: f64, a: f64, y: f64, band: &GammaBand, loss: &BaseLoss) -> Result<f64, LossError> {
    check_finite("ru_loss", &[z, a, y])?;
    Ok(ru_loss_from_base(loss.value(z, y), a, band))
}

/// Subgradient of the RU loss in `(z, a)`.
///
/// At the kink `L(z, y) = a` the hinge indicator is taken as 0, matching the
/// right-continuous CDF convention used by the quantile oracles; any choice in
/// the subdifferential is valid there.
pub fn ru_loss_grad(
    z: f64,
    a: f64,
    y: f64,
    band: &GammaBand,
    loss: &BaseLoss,
) -> Result<(f64, f64), LossError> {
    check_finite("ru_loss_grad", &[z, a, y])?;
    let base = loss.value(z, y);
    let active = base > a;
    let dz = if active {
        (band.inv_gamma + band.c_relu) * loss.d1(z, y)
    } else {
        band.inv_gamma * loss.d1(z, y)
    };
    let da = if active {
        band.c_lin - band.c_relu
    } else {
        band.c_lin
    };
    Ok((dz, da))
}

fn check_finite(op: &'static str, values: &[f64]) -> Result<(), LossError> {
    for &v in values {
        if !v.is_finite() {
            return Err(LossError::NonFinite { op, value: v });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn band(gamma: f64) -> GammaBand {
        GammaBand::new(gamma).unwrap()
    }

    #[test]
    fn gamma_band_coefficients() {
        for g in [1.5, 2.0, 4.0, 8.0, 16.0, 100.0] {
            let b = band(g);
            assert!((b.inv_gamma() * b.gamma() - 1.0).abs() <= 1e-12);
            assert_eq!(b.eta(), g / (g + 1.0));
            assert!(b.eta() > 0.5 && b.eta() < 1.0);
            // Normalization of the worst-case weight function.
            assert!((b.inv_gamma() + b.c_relu() * (1.0 - b.eta()) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn gamma_band_rejects_invalid() {
        assert!(GammaBand::new(1.0).is_err());
        assert!(GammaBand::new(0.5).is_err());
        assert!(GammaBand::new(f64::NAN).is_err());
        assert!(GammaBand::new(f64::INFINITY).is_err());
    }

    #[test]
    fn squared_loss_basics() {
        let l = BaseLoss::Squared;
        for y in [-3.0, 0.0, 1.7, 12.0] {
            assert_eq!(l.value(y, y), 0.0);
        }
        assert_eq!(l.value(0.0, 2.0), 4.0);
        assert_eq!(l.d1(0.0, 2.0), -4.0);
        assert_eq!(l.d2(0.0, 2.0), 2.0);
    }

    #[test]
    fn squared_loss_d1_matches_finite_difference() {
        let l = BaseLoss::Squared;
        let h = 1e-5;
        for (z, y) in [(0.3, 1.2), (-2.0, 4.0), (5.5, 5.0), (10.0, -3.0)] {
            let fd = (l.value(z + h, y) - l.value(z - h, y)) / (2.0 * h);
            let an = l.d1(z, y);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "fd={fd} an={an}");
        }
    }

    #[test]
    fn ru_loss_hand_examples() {
        let l = BaseLoss::Squared;
        let b = band(2.0);
        // L = 4 > a = 1: 0.5*4 + 0.5*1 + 1.5*3 = 7
        assert_eq!(ru_loss(0.0, 1.0, 2.0, &b, &l).unwrap(), 7.0);
        // Zero residual, zero level.
        for g in [1.5, 2.0, 8.0] {
            assert_eq!(ru_loss(3.0, 0.0, 3.0, &band(g), &l).unwrap(), 0.0);
        }
        // L = 1 < a = 2: hinge inactive, 0.5*1 + 0.5*2 = 1.5
        assert_eq!(ru_loss(0.0, 2.0, 1.0, &b, &l).unwrap(), 1.5);
    }

    #[test]
    fn ru_loss_rejects_non_finite() {
        let l = BaseLoss::Squared;
        let b = band(2.0);
        assert!(ru_loss(f64::NAN, 0.0, 0.0, &b, &l).is_err());
        assert!(ru_loss(0.0, f64::INFINITY, 0.0, &b, &l).is_err());
        assert!(ru_loss_grad(0.0, 0.0, f64::NEG_INFINITY, &b, &l).is_err());
    }

    #[test]
    fn ru_grad_hand_examples() {
        let l = BaseLoss::Squared;
        let b = band(2.0);
        // L = 4 > a = 1: dz = (0.5 + 1.5)*(-4) = -8, da = 0.5 - 1.5 = -1
        let (dz, da) = ru_loss_grad(0.0, 1.0, 2.0, &b, &l).unwrap();
        assert_eq!(dz, -8.0);
        assert_eq!(da, -1.0);
        // L = 1 < a = 2: dz = 0.5*(-2) = -1, da = 0.5
        let (dz, da) = ru_loss_grad(0.0, 2.0, 1.0, &b, &l).unwrap();
        assert_eq!(dz, -1.0);
        assert_eq!(da, 0.5);
    }

    #[test]
    fn ru_grad_at_kink_uses_inactive_branch() {
        let l = BaseLoss::Squared;
        let b = band(4.0);
        // L(1, 2) = 1 = a exactly.
        let (_, da) = ru_loss_grad(1.0, 1.0, 2.0, &b, &l).unwrap();
        assert_eq!(da, b.c_lin());
    }

    #[test]
    fn ru_grad_matches_finite_difference_off_kink() {
        let l = BaseLoss::Squared;
        let step = 1e-5;
        let cases = [
            (0.4, 1.0, 2.0, 2.0),
            (-1.0, 3.0, 0.5, 4.0),
            (2.0, 0.2, 3.0, 8.0),
            (0.0, 10.0, 1.0, 1.5),
        ];
        for (z, a, y, g) in cases {
            let b = band(g);
            // Keep clear of the hinge kink so central differences are valid.
            assert!((l.value(z, y) - a).abs() > 10.0 * step);
            let f = |z: f64, a: f64| ru_loss(z, a, y, &b, &l).unwrap();
            let fd_z = (f(z + step, a) - f(z - step, a)) / (2.0 * step);
            let fd_a = (f(z, a + step) - f(z, a - step)) / (2.0 * step);
            let (dz, da) = ru_loss_grad(z, a, y, &b, &l).unwrap();
            assert!((fd_z - dz).abs() <= 1e-5 * dz.abs().max(1.0), "dz fd={fd_z} an={dz}");
            assert!((fd_a - da).abs() <= 1e-5 * da.abs().max(1.0), "da fd={fd_a} an={da}");
        }
    }

    #[test]
    fn gamma_to_one_degenerates_to_base_loss() {
        let l = BaseLoss::Squared;
        let b = band(1.0 + 1e-9);
        for (z, a, y) in [(0.0, 5.0, 2.0), (1.0, 0.0, -3.0), (-2.0, 100.0, 4.0)] {
            let base = l.value(z, y);
            let ru = ru_loss(z, a, y, &b, &l).unwrap();
            assert!((ru - base).abs() <= 1e-6 * (1.0 + a.abs() + base));
        }
    }

    #[test]
    fn min_over_a_nondecreasing_in_gamma() {
        let l = BaseLoss::Squared;
        // Single sample: grid-minimize over a for increasing gamma.
        let (z, y) = (0.5, 3.0);
        let base = l.value(z, y);
        let mut prev = f64::NEG_INFINITY;
        for g in [1.5, 2.0, 4.0, 8.0] {
            let b = band(g);
            let mut best = f64::INFINITY;
            let mut a = 0.0;
            while a <= 2.0 * base {
                best = best.min(ru_loss(z, a, y, &b, &l).unwrap());
                a += base / 2000.0;
            }
            assert!(best >= prev - 1e-9, "gamma={g}: {best} < {prev}");
            prev = best;
        }
    }

    proptest! {
        #[test]
        fn midpoint_convexity(
            z1 in -20.0f64..20.0, a1 in -5.0f64..50.0,
            z2 in -20.0f64..20.0, a2 in -5.0f64..50.0,
            y in -20.0f64..20.0, g in 1.001f64..32.0,
        ) {
            let l = BaseLoss::Squared;
            let b = band(g);
            let mid = ru_loss(0.5 * (z1 + z2), 0.5 * (a1 + a2), y, &b, &l).unwrap();
            let avg = 0.5 * ru_loss(z1, a1, y, &b, &l).unwrap()
                + 0.5 * ru_loss(z2, a2, y, &b, &l).unwrap();
            prop_assert!(mid <= avg + 1e-12 * avg.abs().max(1.0));
        }

        #[test]
        fn subgradient_inequality(
            z in -10.0f64..10.0, a in -2.0f64..30.0,
            zp in -10.0f64..10.0, ap in -2.0f64..30.0,
            y in -10.0f64..10.0, g in 1.001f64..32.0,
        ) {
            let l = BaseLoss::Squared;
            let b = band(g);
            let f = ru_loss(z, a, y, &b, &l).unwrap();
            let fp = ru_loss(zp, ap, y, &b, &l).unwrap();
            let (dz, da) = ru_loss_grad(z, a, y, &b, &l).unwrap();
            let linear = f + dz * (zp - z) + da * (ap - a);
            prop_assert!(fp >= linear - 1e-10 * linear.abs().max(1.0),
                "first-order bound violated: {fp} < {linear}");
        }
    }
}
