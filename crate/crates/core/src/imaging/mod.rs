//! Test images and tomography operators: the Shepp–Logan head phantom,
//! a parallel-beam Radon transform as an explicit sensing ensemble, PSNR,
//! and simple image export.

mod export;

pub use export::{write_csv, write_pgm16};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::sensing::{SensingEnsemble, SparseRows};
use crate::tv::ImageVec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImagingError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("images differ in shape: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("reference image is identically zero")]
    ZeroTruth,
}

/// One ellipse of a phantom; coordinates live in `[−1, 1]²` with `y` up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    /// Counter-clockwise, radians.
    pub rotation: f64,
    /// Added to every pixel the ellipse covers.
    pub intensity: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let (s, c) = self.rotation.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_axes[0]).powi(2) + (v / self.semi_axes[1]).powi(2) <= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SheppLoganVariant {
    /// The original additive table; values range over `[0, 2]`.
    Original,
    /// The higher-contrast table common in imaging toolboxes.
    Modified,
}

/// Index of the small central disc at `(0, 0.1)` that [`shepp_logan`] resizes.
pub const CENTER_ELLIPSE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub ellipses: Vec<Ellipse>,
}

impl Phantom {
    pub fn shepp_logan(variant: SheppLoganVariant) -> Self {
        let deg = std::f64::consts::PI / 180.0;
        // (x0, y0, a, b, rotation in degrees)
        let geometry = [
            (0.0, 0.0, 0.69, 0.92, 0.0),
            (0.0, -0.0184, 0.6624, 0.874, 0.0),
            (0.22, 0.0, 0.11, 0.31, -18.0),
            (-0.22, 0.0, 0.16, 0.41, 18.0),
            (0.0, 0.35, 0.21, 0.25, 0.0),
            (0.0, 0.1, 0.046, 0.046, 0.0),
            (0.0, -0.1, 0.046, 0.046, 0.0),
            (-0.08, -0.605, 0.046, 0.023, 0.0),
            (0.0, -0.605, 0.023, 0.023, 0.0),
            (0.06, -0.605, 0.023, 0.046, 0.0),
        ];
        let intensities: [f64; 10] = match variant {
            SheppLoganVariant::Original => [2.0, -0.98, -0.02, -0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01],
            SheppLoganVariant::Modified => [1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1],
        };
        let ellipses = geometry
            .iter()
            .zip(intensities)
            .map(|(&(x0, y0, a, b, rot), intensity)| Ellipse {
                center: [x0, y0],
                semi_axes: [a, b],
                rotation: rot * deg,
                intensity,
            })
            .collect();
        Self { ellipses }
    }

    /// Sum of the intensities of all ellipses containing `(x, y)`.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        self.ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum()
    }

    /// Scales ellipse `index` by `factor` and sets its intensity so the
    /// phantom equals `value` at the ellipse centre.
    pub fn resize_and_retarget(&mut self, index: usize, factor: f64, value: f64) -> Result<(), ImagingError> {
        if index >= self.ellipses.len() {
            return Err(ImagingError::BadParameter(format!("no ellipse {index}")));
        }
        let e = &mut self.ellipses[index];
        e.semi_axes = [e.semi_axes[0] * factor, e.semi_axes[1] * factor];
        let [cx, cy] = e.center;
        let others: f64 = self
            .ellipses
            .iter()
            .enumerate()
            .filter(|&(k, e)| k != index && e.contains(cx, cy))
            .map(|(_, e)| e.intensity)
            .sum();
        self.ellipses[index].intensity = value - others;
        Ok(())
    }

    /// Samples pixel centres of an `n × n` grid over `[−1, 1]²`, divides by
    /// `scale` and clamps negatives to 0. Row 0 is the top of the image.
    pub fn rasterize<T: Scalar>(&self, n: usize, scale: f64) -> ImageVec<T> {
        let h = 2.0 / n as f64;
        let mut img = ImageVec::zeros(n);
        for i in 0..n {
            let y = 1.0 - (i as f64 + 0.5) * h;
            for j in 0..n {
                let x = -1.0 + (j as f64 + 0.5) * h;
                img.set(i, j, T::lit((self.value_at(x, y) / scale).max(0.0)));
            }
        }
        img
    }
}

/// Original Shepp–Logan phantom with the central disc enlarged by
/// `center_radius_factor` and set to `center_intensity`, all values divided
/// by `global_scale`.
pub fn shepp_logan<T: Scalar>(
    n: usize,
    center_radius_factor: f64,
    center_intensity: f64,
    global_scale: f64,
) -> Result<ImageVec<T>, ImagingError> {
    if n < 16 {
        return Err(ImagingError::BadParameter(format!("side must be at least 16, got {n}")));
    }
    if !(center_radius_factor > 0.0 && global_scale > 0.0 && center_intensity.is_finite()) {
        return Err(ImagingError::BadParameter(
            "radius factor and scale must be positive".into(),
        ));
    }
    let mut phantom = Phantom::shepp_logan(SheppLoganVariant::Original);
    phantom.resize_and_retarget(CENTER_ELLIPSE, center_radius_factor, center_intensity)?;
    Ok(phantom.rasterize(n, global_scale))
}

/// Parallel-beam scan geometry over the square `[−1, 1]²`.
///
/// Ray `(θ, t)` is the line `{p : p·(cos θ, sin θ) = t}`. Detector offsets
/// are cell centres of a uniform split of `[−√2, √2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadonGeometry {
    pub side: usize,
    pub angles: Vec<f64>,
    pub detectors: Vec<f64>,
}

impl RadonGeometry {
    pub fn new(side: usize, n_angles: usize, n_detectors: usize) -> Result<Self, ImagingError> {
        Self::with_angle_offset(side, n_angles, n_detectors, 0.0)
    }

    /// Angles `offset + kπ/n_angles` for `k < n_angles`.
    pub fn with_angle_offset(
        side: usize,
        n_angles: usize,
        n_detectors: usize,
        offset: f64,
    ) -> Result<Self, ImagingError> {
        if side == 0 || n_angles == 0 || n_detectors == 0 {
            return Err(ImagingError::BadParameter(
                "side, angle count and detector count must be positive".into(),
            ));
        }
        let pi = std::f64::consts::PI;
        let angles = (0..n_angles).map(|k| offset + k as f64 * pi / n_angles as f64).collect();
        let half = std::f64::consts::SQRT_2;
        let width = 2.0 * half / n_detectors as f64;
        let detectors = (0..n_detectors).map(|k| -half + (k as f64 + 0.5) * width).collect();
        Ok(Self {
            side,
            angles,
            detectors,
        })
    }

    pub fn rays(&self) -> usize {
        self.angles.len() * self.detectors.len()
    }

    /// Row `a·n_detectors + k` pairs angle `a` with detector `k`.
    pub fn ensemble<T: Scalar>(&self) -> SensingEnsemble<T> {
        let n = self.side;
        let nd = self.detectors.len();
        let rows: Vec<Vec<(usize, T)>> = (0..self.rays())
            .into_par_iter()
            .map(|r| {
                ray_weights(n, self.angles[r / nd], self.detectors[r % nd])
                    .into_iter()
                    .map(|(p, w)| (p, T::lit(w)))
                    .collect()
            })
            .collect();
        SensingEnsemble::explicit(SparseRows::from_rows(n * n, rows).expect("pixel indices are in range"))
    }
}

/// Radon transform with angles equispaced in `[0, π)` and detectors across
/// the image diagonal.
pub fn radon_ensemble<T: Scalar>(
    n: usize,
    n_angles: usize,
    n_detectors: usize,
) -> Result<SensingEnsemble<T>, ImagingError> {
    Ok(RadonGeometry::new(n, n_angles, n_detectors)?.ensemble())
}

/// Intersection lengths of ray `(θ, t)` with the pixels of an `n × n`
/// grid on `[−1, 1]²`, as `(column-major pixel index, length)`.
///
/// Walks the ray's crossings with all grid lines (Siddon's method).
pub fn ray_weights(n: usize, theta: f64, t: f64) -> Vec<(usize, f64)> {
    let (s, c) = theta.sin_cos();
    let (px, py) = (t * c, t * s);
    let (ux, uy) = (-s, c);
    const EPS: f64 = 1e-12;

    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (p, u) in [(px, ux), (py, uy)] {
        if u.abs() < EPS {
            if p.abs() >= 1.0 {
                return Vec::new();
            }
        } else {
            let (a, b) = ((-1.0 - p) / u, (1.0 - p) / u);
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
    }
    if hi - lo <= EPS {
        return Vec::new();
    }

    let h = 2.0 / n as f64;
    let mut cuts = vec![lo, hi];
    for (p, u) in [(px, ux), (py, uy)] {
        if u.abs() < EPS {
            continue;
        }
        for k in 0..=n {
            let a = (-1.0 + k as f64 * h - p) / u;
            if a > lo && a < hi {
                cuts.push(a);
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));

    let mut out: Vec<(usize, f64)> = Vec::with_capacity(2 * n);
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= EPS {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let (x, y) = (px + mid * ux, py + mid * uy);
        let j = (((x + 1.0) / h).floor() as usize).min(n - 1);
        let i = (((1.0 - y) / h).floor() as usize).min(n - 1);
        let p = j * n + i;
        match out.last_mut() {
            Some(last) if last.0 == p => last.1 += len,
            _ => out.push((p, len)),
        }
    }
    out
}

/// Peak signal-to-noise ratio in decibels,
/// `−10 log₁₀( (‖Î − I‖_F / max|I|)² / N )`. Identical images give `+∞`.
pub fn psnr<T: Scalar>(reconstruction: &ImageVec<T>, truth: &ImageVec<T>) -> Result<f64, ImagingError> {
    let (a, b) = (reconstruction.as_slice(), truth.as_slice());
    if a.len() != b.len() {
        return Err(ImagingError::ShapeMismatch(a.len(), b.len()));
    }
    let peak = b.iter().fold(0.0_f64, |m, v| m.max(v.as_f64().abs()));
    if peak == 0.0 {
        return Err(ImagingError::ZeroTruth);
    }
    let err2: f64 = a.iter().zip(b).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum();
    if err2 == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = err2 / (peak * peak) / a.len() as f64;
    Ok(-10.0 * mse.log10())
}
