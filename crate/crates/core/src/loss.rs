//! The nonsmooth ℓ1 recovery objective and the squared-loss baseline.
//!
//! With `s_i = ⟨a_i, x⟩`, `h_i = 1 − e^{−[s_i]₊}` and residual `r_i = y_i − h_i`:
//!
//! * `f(x) = (1/m) Σ |r_i|`, with subgradient selection
//!   `v = −(1/m) Σ sign(r_i) e^{−[s_i]₊} 1{s_i ≥ 0} a_i`, where `sign(0) = 0`
//!   and the indicator is 1 at `s_i = 0`;
//! * `𝓛(x) = (1/2m) Σ r_i²` with gradient `(1/m) Σ (h_i − y_i) e^{−[s_i]₊} 1{s_i ≥ 0} a_i`.
//!
//! Ties are triggered only by exact floating-point zeros.
//!
//! Both directions have the form `Aᵀc` for per-row coefficients `c`, so a
//! single `apply` / `adjoint` pair gives value and direction together.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::sensing::{MeasurementSet, SensingEnsemble, SensingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error("ensemble has {samples} rows but {measurements} measurements were supplied")]
    MeasurementCount { samples: usize, measurements: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    L1,
    Squared,
}

/// Loss value plus the (sub)gradient that was selected at the same point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub value: T,
    pub direction: Vec<T>,
}

/// Per-row intermediate quantities of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RowTerms<T> {
    /// `⟨a_i, x⟩`.
    pub inner: Vec<T>,
    /// Coefficients `c` with direction `= Aᵀc`.
    pub coefficients: Vec<T>,
    pub value: T,
}

/// Immutable view pairing an ensemble with its measurements.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a, T> {
    ensemble: &'a SensingEnsemble<T>,
    measurements: &'a MeasurementSet<T>,
    kind: LossKind,
}

#[inline]
fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

impl<'a, T: Scalar> Objective<'a, T> {
    pub fn new(
        ensemble: &'a SensingEnsemble<T>,
        measurements: &'a MeasurementSet<T>,
        kind: LossKind,
    ) -> Result<Self, LossError> {
        if ensemble.samples() != measurements.len() {
            return Err(LossError::MeasurementCount {
                samples: ensemble.samples(),
                measurements: measurements.len(),
            });
        }
        Ok(Self {
            ensemble,
            measurements,
            kind,
        })
    }

    pub fn l1(ensemble: &'a SensingEnsemble<T>, measurements: &'a MeasurementSet<T>) -> Result<Self, LossError> {
        Self::new(ensemble, measurements, LossKind::L1)
    }

    pub fn squared(
        ensemble: &'a SensingEnsemble<T>,
        measurements: &'a MeasurementSet<T>,
    ) -> Result<Self, LossError> {
        Self::new(ensemble, measurements, LossKind::Squared)
    }

    /// Same data, different loss.
    pub fn with_kind(&self, kind: LossKind) -> Self {
        Self { kind, ..*self }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn ensemble(&self) -> &'a SensingEnsemble<T> {
        self.ensemble
    }

    pub fn measurements(&self) -> &'a MeasurementSet<T> {
        self.measurements
    }

    pub fn dim(&self) -> usize {
        self.ensemble.dim()
    }

    pub fn truth(&self) -> Option<&'a [T]> {
        self.measurements.truth.as_deref()
    }

    /// Row terms of the selected loss.
    pub fn row_terms(&self, x: &[T]) -> Result<RowTerms<T>, LossError> {
        let inner = self.ensemble.apply(x)?;
        let m = T::from_usize_lossy(inner.len());
        let mut coefficients = Vec::with_capacity(inner.len());
        let mut acc = T::zero();
        for (&s, &y) in inner.iter().zip(&self.measurements.y) {
            let decay = (-s.max(T::zero())).exp();
            let residual = y - (T::one() - decay);
            let active = s >= T::zero();
            match self.kind {
                LossKind::L1 => {
                    acc += residual.abs();
                    coefficients.push(if active { -sign(residual) * decay / m } else { T::zero() });
                }
                LossKind::Squared => {
                    acc += residual * residual;
                    coefficients.push(if active { -residual * decay / m } else { T::zero() });
                }
            }
        }
        let value = match self.kind {
            LossKind::L1 => acc / m,
            LossKind::Squared => acc / (m + m),
        };
        Ok(RowTerms {
            inner,
            coefficients,
            value,
        })
    }

    /// Value and direction of the selected loss in one pass.
    pub fn evaluate(&self, x: &[T]) -> Result<Evaluation<T>, LossError> {
        let terms = self.row_terms(x)?;
        let direction = self.ensemble.adjoint(&terms.coefficients)?;
        Ok(Evaluation {
            value: terms.value,
            direction,
        })
    }

    /// Value of the selected loss only.
    pub fn value(&self, x: &[T]) -> Result<T, LossError> {
        let inner = self.ensemble.apply(x)?;
        let m = T::from_usize_lossy(inner.len());
        let mut acc = T::zero();
        for (&s, &y) in inner.iter().zip(&self.measurements.y) {
            let residual = y - crate::sensing::link(s);
            acc += match self.kind {
                LossKind::L1 => residual.abs(),
                LossKind::Squared => residual * residual,
            };
        }
        Ok(match self.kind {
            LossKind::L1 => acc / m,
            LossKind::Squared => acc / (m + m),
        })
    }

    pub fn l1_value(&self, x: &[T]) -> Result<T, LossError> {
        self.with_kind(LossKind::L1).value(x)
    }

    pub fn l1_subgradient(&self, x: &[T]) -> Result<Vec<T>, LossError> {
        Ok(self.with_kind(LossKind::L1).evaluate(x)?.direction)
    }

    pub fn sq_value(&self, x: &[T]) -> Result<T, LossError> {
        self.with_kind(LossKind::Squared).value(x)
    }

    pub fn sq_gradient(&self, x: &[T]) -> Result<Vec<T>, LossError> {
        Ok(self.with_kind(LossKind::Squared).evaluate(x)?.direction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};
    use crate::scalar;
    use crate::sensing::{gaussian_ensemble, generate_measurements, sample_signal, NoiseModel, SparseRows};

    fn tiny() -> (SensingEnsemble<f64>, MeasurementSet<f64>) {
        let a = SensingEnsemble::explicit(SparseRows::from_dense(&[vec![1.0], vec![-1.0]]).unwrap());
        let meas = generate_measurements(&a, &[1.0], NoiseModel::Clean, 0).unwrap();
        (a, meas)
    }

    fn instance(d: usize, m: usize, r: f64, seed: u64) -> (SensingEnsemble<f64>, MeasurementSet<f64>) {
        let a = gaussian_ensemble(d, m, seed);
        let x = sample_signal(d, r, seed + 1);
        let meas = generate_measurements(&a, &x, NoiseModel::Clean, 0).unwrap();
        (a, meas)
    }

    fn probe(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng::substream(seed, Domain::Probe, 1);
        (0..len).map(|_| rng::standard_normal(&mut rng)).collect()
    }

    #[test]
    fn hand_evaluated_instance() {
        let (a, meas) = tiny();
        assert!((meas.y[0] - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(meas.y[1], 0.0);
        let obj = Objective::l1(&a, &meas).unwrap();
        let f = obj.l1_value(&[0.0]).unwrap();
        assert!((f - 0.316_060_279_414_278_6).abs() < 1e-12);
        assert_eq!(obj.l1_subgradient(&[0.0]).unwrap(), vec![-0.5]);
        let l = obj.sq_value(&[0.0]).unwrap();
        assert!((l - (1.0 - (-1.0f64).exp()).powi(2) / 4.0).abs() < 1e-15);
        assert!((l - 0.09985).abs() < 1e-4);
        let g = obj.sq_gradient(&[0.0]).unwrap();
        assert!((g[0] - ((-1.0f64).exp() - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_at_truth() {
        let (a, meas) = instance(10, 60, 2.0, 3);
        let obj = Objective::l1(&a, &meas).unwrap();
        let x = meas.truth.clone().unwrap();
        assert_eq!(obj.l1_value(&x).unwrap(), 0.0);
        assert!(obj.l1_subgradient(&x).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(obj.sq_value(&x).unwrap(), 0.0);
        assert!(obj.sq_gradient(&x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn values_at_origin() {
        let (a, meas) = instance(10, 60, 2.0, 4);
        let obj = Objective::l1(&a, &meas).unwrap();
        let zero = vec![0.0; 10];
        let mean_y = meas.y.iter().sum::<f64>() / 60.0;
        assert!((obj.l1_value(&zero).unwrap() - mean_y).abs() < 1e-15);
        let half_sq = meas.y.iter().map(|y| y * y).sum::<f64>() / 120.0;
        assert!((obj.sq_value(&zero).unwrap() - half_sq).abs() < 1e-15);
    }

    #[test]
    fn subgradient_at_origin_matches_closed_form() {
        let (a, meas) = instance(12, 80, 1.5, 5);
        let obj = Objective::l1(&a, &meas).unwrap();
        let v = obj.l1_subgradient(&[0.0; 12]).unwrap();
        let x = meas.truth.as_ref().unwrap();
        let mut expect = [0.0; 12];
        for i in 0..80 {
            let row = a.row(i);
            if scalar::dot(&row, x) > 0.0 {
                for j in 0..12 {
                    expect[j] -= row[j] / 80.0;
                }
            }
        }
        for j in 0..12 {
            assert!((v[j] - expect[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (a, meas) = instance(16, 96, 1.0, 6);
        let obj = Objective::squared(&a, &meas).unwrap();
        let eps = 1e-6;
        for t in 0..20 {
            let x = probe(16, 100 + t);
            let u = probe(16, 200 + t);
            let g = obj.sq_gradient(&x).unwrap();
            let plus: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + eps * b).collect();
            let minus: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a - eps * b).collect();
            let fd = (obj.sq_value(&plus).unwrap() - obj.sq_value(&minus).unwrap()) / (2.0 * eps);
            assert!((scalar::dot(&g, &u) - fd).abs() <= 1e-5);
        }
    }

    #[test]
    fn subgradient_matches_gradient_where_differentiable() {
        let (a, meas) = instance(8, 64, 1.0, 7);
        let obj = Objective::l1(&a, &meas).unwrap();
        let eps = 1e-7;
        for t in 0..20 {
            let x = probe(8, 300 + t);
            let terms = obj.row_terms(&x).unwrap();
            let h = crate::sensing::forward_model(&a, &x).unwrap();
            assert!(terms.inner.iter().all(|&s| s != 0.0));
            // ties only where both sides are identically zero nearby
            for ((h, y), s) in h.iter().zip(&meas.y).zip(&terms.inner) {
                assert!(h != y || (*y == 0.0 && *s < 0.0));
            }
            let v = obj.l1_subgradient(&x).unwrap();
            for j in 0..8 {
                let mut p = x.clone();
                let mut q = x.clone();
                p[j] += eps;
                q[j] -= eps;
                let fd = (obj.l1_value(&p).unwrap() - obj.l1_value(&q).unwrap()) / (2.0 * eps);
                assert!((v[j] - fd).abs() < 1e-5, "coord {j}: {} vs {fd}", v[j]);
            }
        }
    }

    #[test]
    fn exact_zero_inner_product_counts_as_active() {
        // a = (1, -1), x = (1, 1): ⟨a, x⟩ = 0 exactly, residual y - 0 > 0.
        let a = SensingEnsemble::explicit(SparseRows::from_dense(&[vec![1.0, -1.0]]).unwrap());
        let meas = MeasurementSet::from_observations(vec![0.25]);
        let obj = Objective::l1(&a, &meas).unwrap();
        assert_eq!(obj.l1_subgradient(&[1.0, 1.0]).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn measurement_count_checked() {
        let a = gaussian_ensemble::<f64>(3, 5, 0);
        let meas = MeasurementSet::from_observations(vec![0.0; 4]);
        assert!(matches!(
            Objective::l1(&a, &meas),
            Err(LossError::MeasurementCount { samples: 5, measurements: 4 })
        ));
        let meas = MeasurementSet::from_observations(vec![0.0; 5]);
        let obj = Objective::l1(&a, &meas).unwrap();
        assert!(obj.l1_value(&[0.0; 2]).is_err());
    }

    #[test]
    fn values_are_nonnegative_with_noisy_data() {
        let a = gaussian_ensemble::<f64>(8, 40, 8);
        let x = sample_signal(8, 2.0, 9);
        let meas = generate_measurements(&a, &x, NoiseModel::PoissonGaussian { scale: 50.0 }, 1).unwrap();
        let obj = Objective::l1(&a, &meas).unwrap();
        for t in 0..10 {
            let p = probe(8, 400 + t);
            assert!(obj.l1_value(&p).unwrap() >= 0.0);
            assert!(obj.sq_value(&p).unwrap() >= 0.0);
        }
    }
}
