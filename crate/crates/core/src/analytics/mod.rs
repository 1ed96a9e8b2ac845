//! Closed-form Gaussian-exponential moments and the conditioning constants
//! that drive stepsize choices.
//!
//! All moment formulas route the product `e^{c²/2} erfc(c/√2)` through
//! [`erfcx`], so they stay finite for arbitrarily large arguments.

mod special;

pub use special::{erfc, erfcx};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

const SQRT_PI: f64 = 1.772_453_850_905_516;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("signal norm {0} is below 1; the conditioning bounds assume ||x*|| >= 1")]
    SignalNormTooSmall(f64),
    #[error("need samples >= dim >= 1, got dim={dim}, samples={samples}")]
    BadShape { dim: usize, samples: usize },
    #[error("stepsize scaling must lie in (0, 1], got {0}")]
    BadEta(f64),
}

/// `E[e^{-cX} 1{X >= 0}]` for standard Gaussian `X`, i.e. `½ e^{c²/2} erfc(c/√2)`.
pub fn exp_pos_moment<T: Scalar>(c: T) -> T {
    T::lit(0.5 * erfcx(c.as_f64() / std::f64::consts::SQRT_2))
}

/// `E[e^{-cX} X₊]` for standard Gaussian `X`, i.e. `½(√(2/π) − c e^{c²/2} erfc(c/√2))`.
///
/// The exponent carries a plus sign; the quadrature tests pin this down.
pub fn exp_plus_moment<T: Scalar>(c: T) -> T {
    let c = c.as_f64();
    let sqrt_2_over_pi = (2.0 / std::f64::consts::PI).sqrt();
    T::lit(0.5 * (sqrt_2_over_pi - c * erfcx(c / std::f64::consts::SQRT_2)))
}

/// Mean of the ℓ1 loss at the origin under the Gaussian model, `½(1 − e^{r²/2} erfc(r/√2))`.
pub fn expected_loss_at_zero<T: Scalar>(r: T) -> T {
    T::lit(0.5 * (1.0 - erfcx(r.as_f64() / std::f64::consts::SQRT_2)))
}

/// Sharpness modulus `1 / (4√π (1 + 9π r²))`.
pub fn mu_bound<T: Scalar>(r: T) -> T {
    let r = r.as_f64();
    T::lit(1.0 / (4.0 * SQRT_PI * (1.0 + 9.0 * std::f64::consts::PI * r * r)))
}

/// Lipschitz modulus `1 + 2√(d/m)`.
pub fn lipschitz_bound<T: Scalar>(dim: usize, samples: usize) -> T {
    T::lit(1.0 + 2.0 * (dim as f64 / samples as f64).sqrt())
}

/// Condition number bound `8√π (1 + 9π r²)`.
pub fn kappa_bound<T: Scalar>(r: T) -> T {
    let r = r.as_f64();
    T::lit(8.0 * SQRT_PI * (1.0 + 9.0 * std::f64::consts::PI * r * r))
}

/// Conditioning constants for a given signal norm and problem shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants<T> {
    pub signal_norm: T,
    pub dim: usize,
    pub samples: usize,
    pub mu: T,
    pub lip: T,
    pub kappa: T,
    /// Stepsize scaling the contraction factors were computed for.
    pub eta: T,
    pub rho: T,
    pub rho_bar: T,
    pub t0: u64,
}

impl<T: Scalar> TheoryConstants<T> {
    /// The largest scaling the convergence guarantee allows, `μ/𝖫`.
    pub fn safe_eta(&self) -> T {
        self.mu / self.lip
    }
}

/// Theory constants with the default scaling `η = μ/𝖫`.
pub fn theory_constants<T: Scalar>(
    r: T,
    dim: usize,
    samples: usize,
) -> Result<TheoryConstants<T>, AnalyticsError> {
    theory_constants_with_eta(r, dim, samples, None)
}

/// Theory constants; `eta` overrides the default `μ/𝖫` used for `ρ = η (μ/𝖫)²`.
pub fn theory_constants_with_eta<T: Scalar>(
    r: T,
    dim: usize,
    samples: usize,
    eta: Option<T>,
) -> Result<TheoryConstants<T>, AnalyticsError> {
    if !(r >= T::one()) {
        return Err(AnalyticsError::SignalNormTooSmall(r.as_f64()));
    }
    if dim == 0 || samples < dim {
        return Err(AnalyticsError::BadShape { dim, samples });
    }
    let mu = mu_bound(r);
    let lip = lipschitz_bound::<T>(dim, samples);
    let kappa = kappa_bound(r);
    let eta = match eta {
        Some(e) if e > T::zero() && e <= T::one() => e,
        Some(e) => return Err(AnalyticsError::BadEta(e.as_f64())),
        None => mu / lip,
    };
    let ratio = mu / lip;
    let rho = eta * ratio * ratio;
    let rho_bar = rho / (T::lit(40.0 * SQRT_PI) * r);
    let t0 = (std::f64::consts::LN_2 / rho_bar.as_f64()).ceil() as u64;
    Ok(TheoryConstants {
        signal_norm: r,
        dim,
        samples,
        mu,
        lip,
        kappa,
        eta,
        rho,
        rho_bar,
        t0,
    })
}

/// Gradient-descent baseline schedule: a long first step `4 e^{-r²/2} / erfc(r/√2)`
/// followed by the constant `c0 e^{-5r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdSchedule<T> {
    pub first: T,
    pub rest: T,
}

impl<T: Scalar> GdSchedule<T> {
    /// Same stepsize at every iteration.
    pub fn constant(step: T) -> Self {
        Self { first: step, rest: step }
    }

    pub fn step(&self, k: usize) -> T {
        if k == 0 {
            self.first
        } else {
            self.rest
        }
    }
}

pub fn gd_stepsize_schedule<T: Scalar>(r: T, c0: T) -> GdSchedule<T> {
    let rf = r.as_f64();
    // e^{-r²/2} / erfc(r/√2) = 1 / erfcx(r/√2)
    let first = 4.0 / erfcx(rf / std::f64::consts::SQRT_2);
    let rest = c0.as_f64() * (-5.0 * rf).exp();
    GdSchedule {
        first: T::lit(first),
        rest: T::lit(rest),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_at_zero() {
        assert_eq!(exp_pos_moment(0.0_f64), 0.5);
        let e = exp_plus_moment(0.0_f64);
        assert!((e - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn expected_loss_examples() {
        assert_eq!(expected_loss_at_zero(0.0_f64), 0.0);
        assert!(expected_loss_at_zero(1.0_f64) >= 0.235);
        assert!((expected_loss_at_zero(1e6_f64) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn expected_loss_is_increasing() {
        let mut prev = expected_loss_at_zero(0.0_f64);
        for i in 1..=2000 {
            let cur = expected_loss_at_zero(i as f64 * 0.01);
            assert!(cur > prev, "not increasing at r={}", i as f64 * 0.01);
            prev = cur;
        }
    }

    #[test]
    fn scaled_erfc_times_argument_is_nondecreasing() {
        let mut prev = 0.0;
        for i in 0..=2000 {
            let x = i as f64 * 0.01;
            let cur = x * erfcx(x);
            assert!(cur >= prev, "decreased at x={x}");
            prev = cur;
        }
    }

    #[test]
    fn constants_unit_norm() {
        let c = theory_constants(1.0_f64, 128, 512).unwrap();
        let mu = 1.0 / (4.0 * std::f64::consts::PI.sqrt() * (1.0 + 9.0 * std::f64::consts::PI));
        assert!((c.mu - mu).abs() < 1e-16);
        assert!((c.lip - 2.0).abs() < 1e-15);
        assert!((c.kappa - 415.1).abs() < 0.05, "kappa={}", c.kappa);
        assert!((c.eta - c.mu / c.lip).abs() < 1e-18);
    }

    #[test]
    fn constants_r2_t0() {
        let c = theory_constants(2.0_f64, 128, 2048).unwrap();
        // independent re-evaluation of the defining formulas
        let pi = std::f64::consts::PI;
        let mu = 1.0 / (4.0 * pi.sqrt() * (1.0 + 36.0 * pi));
        let lip = 1.5;
        let rho = (mu / lip).powi(3);
        let rho_bar = rho / (80.0 * pi.sqrt());
        assert!(((c.rho_bar - rho_bar) / rho_bar).abs() < 1e-12);
        assert_eq!(c.t0, (2f64.ln() / rho_bar).ceil() as u64);
    }

    #[test]
    fn eta_override() {
        let c = theory_constants_with_eta(1.0_f64, 16, 64, Some(0.5)).unwrap();
        assert!((c.rho - 0.5 * (c.mu / c.lip).powi(2)).abs() < 1e-18);
        assert!(theory_constants_with_eta(1.0_f64, 16, 64, Some(1.5)).is_err());
    }

    #[test]
    fn constants_reject_small_norm_and_bad_shape() {
        assert!(matches!(
            theory_constants(0.5_f64, 8, 8),
            Err(AnalyticsError::SignalNormTooSmall(_))
        ));
        assert!(matches!(
            theory_constants(1.0_f64, 8, 4),
            Err(AnalyticsError::BadShape { .. })
        ));
    }

    #[test]
    fn kappa_dominates_ratio_when_well_sampled() {
        for r in [1.0_f64, 1.5, 2.0, 4.0, 8.0] {
            for (d, m) in [(8, 32), (32, 128), (64, 1024), (128, 512)] {
                let c = theory_constants(r, d, m).unwrap();
                assert!(c.kappa >= c.lip / c.mu * (1.0 - 1e-12), "r={r} d={d} m={m}");
            }
        }
    }

    #[test]
    fn gd_schedule_examples() {
        let s = gd_stepsize_schedule(0.0_f64, 1.0);
        assert!((s.step(0) - 4.0).abs() < 1e-15);
        assert!((s.step(1) - 1.0).abs() < 1e-15);
        let s = gd_stepsize_schedule(1.0_f64, 1.0);
        assert!((s.step(1) - 6.7379e-3).abs() < 1e-7);
        assert!((s.step(7) - (-5.0_f64).exp()).abs() < 1e-18);
        let oracle = 4.0 * (-0.5_f64).exp() / erfc(std::f64::consts::FRAC_1_SQRT_2);
        assert!((s.step(0) - oracle).abs() < 1e-12);
        assert!((s.step(0) - 7.648).abs() < 3e-3);
        // large norm stays finite
        let s = gd_stepsize_schedule(60.0_f64, 1.0);
        assert!(s.step(0).is_finite() && s.step(0) > 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let v: f32 = exp_pos_moment(1.0_f32);
        assert!((v - 0.261_578).abs() < 1e-6);
    }
}
