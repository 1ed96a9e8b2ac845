//! Signal recovery from measurements `y = 1 − exp(−⟨a, x⋆⟩₊)` by Polyak-step
//! subgradient methods on the ℓ1 loss, with a gradient-descent baseline,
//! Gaussian and Walsh–Hadamard sensing, and TV-constrained CT reconstruction.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, which is what the experiments use.
//!
//! ```
//! use ctsgm::sensing::{gaussian_ensemble, generate_measurements, sample_signal, NoiseModel};
//! use ctsgm::solvers::{polyak_sgm, SolveOptions, StopRule};
//!
//! let a = gaussian_ensemble::<f64>(16, 128, 7);
//! let x_star = sample_signal(16, 1.0, 7);
//! let data = generate_measurements(&a, &x_star, NoiseModel::Clean, 7).unwrap();
//! let obj = ctsgm::Objective::l1(&a, &data).unwrap();
//! let opts = SolveOptions::new(1.0, 5000).with_stop(StopRule::Distance(1e-8));
//! let (x, _trace) = polyak_sgm(&obj, &vec![0.0; 16], &opts).unwrap();
//! let err: f64 = x.iter().zip(&x_star).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
//! assert!(err < 1e-6);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod experiments;
pub mod imaging;
pub mod loss;
pub mod rng;
pub mod scalar;
pub mod sensing;
pub mod solvers;
pub mod tv;

pub use loss::{LossKind, Objective};
pub use scalar::Scalar;

pub type Ensemble = sensing::SensingEnsemble<f64>;
pub type Measurements = sensing::MeasurementSet<f64>;
pub type Image = tv::ImageVec<f64>;
pub type Gradient = tv::GradField<f64>;
pub type Trace = solvers::SolveTrace<f64>;
pub type Constants = analytics::TheoryConstants<f64>;
