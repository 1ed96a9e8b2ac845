//! Measurement ensembles, the exponential forward model, signal generation
//! and noise injection.

mod fwht;
pub mod io;

pub use fwht::fwht_in_place;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Domain};
use crate::scalar::{self, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("detector scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("invalid shape: {0}")]
    BadShape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    Gaussian,
    Rwht,
    ExplicitMatrix,
}

/// Row-compressed sparse matrix, the payload of caller-provided operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows<T> {
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseRows<T> {
    /// Builds from per-row `(column, weight)` lists. Entries are kept in the given order.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self, SensingError> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                if c >= cols {
                    return Err(SensingError::BadShape(format!(
                        "column {c} out of range for {cols} columns"
                    )));
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Keeps only the nonzero entries of dense rows.
    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self, SensingError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut lists = Vec::with_capacity(rows.len());
        for r in rows {
            if r.len() != cols {
                return Err(SensingError::BadShape("ragged dense rows".into()));
            }
            lists.push(
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != T::zero())
                    .map(|(c, v)| (c, *v))
                    .collect(),
            );
        }
        Self::from_rows(cols, lists)
    }

    pub(crate) fn from_raw_parts(
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self, SensingError> {
        let ok = !row_ptr.is_empty()
            && row_ptr[0] == 0
            && row_ptr.windows(2).all(|w| w[0] <= w[1])
            && *row_ptr.last().unwrap() == col_idx.len()
            && col_idx.len() == values.len()
            && col_idx.iter().all(|&c| c < cols);
        if !ok {
            return Err(SensingError::BadShape("inconsistent sparse layout".into()));
        }
        Ok(Self {
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(columns, weights)` of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub(crate) fn raw_parts(&self) -> (&[usize], &[usize], &[T]) {
        (&self.row_ptr, &self.col_idx, &self.values)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Payload<T> {
    /// Row-major `m × d`.
    Gaussian(Vec<T>),
    /// `ell × d` sign vectors, block `j` is `ξ^{(j)}`.
    Rwht { ell: usize, signs: Vec<i8> },
    Explicit(SparseRows<T>),
}

/// A linear sensing map `A ∈ R^{m×d}` with row vectors `a_i`.
///
/// Immutable once built; `apply` and `adjoint` take `&self` and may be called
/// from several threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingEnsemble<T> {
    dim: usize,
    samples: usize,
    seed: u64,
    payload: Payload<T>,
}

/// Dense ensemble with i.i.d. standard normal entries.
///
/// Row `i` is drawn from its own stream, so the ensemble is a pure function of
/// `(d, m, seed)`.
pub fn gaussian_ensemble<T: Scalar>(dim: usize, samples: usize, seed: u64) -> SensingEnsemble<T> {
    assert!(dim >= 1 && samples >= 1, "ensemble needs d, m >= 1");
    let mut rows = Vec::with_capacity(dim * samples);
    for i in 0..samples {
        let mut rng = rng::substream(seed, Domain::GaussianRows, i as u64);
        rows.extend((0..dim).map(|_| T::lit(rng::standard_normal(&mut rng))));
    }
    SensingEnsemble {
        dim,
        samples,
        seed,
        payload: Payload::Gaussian(rows),
    }
}

/// Stacked randomized Walsh–Hadamard blocks `[H_d D_1; …; H_d D_ell]` with
/// `D_j = diag(ξ^{(j)})`, `ξ^{(j)}` uniform on `{±1}^d`.
pub fn rwht_ensemble<T: Scalar>(
    dim: usize,
    ell: usize,
    seed: u64,
) -> Result<SensingEnsemble<T>, SensingError> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(SensingError::NotPowerOfTwo(dim));
    }
    if ell == 0 {
        return Err(SensingError::BadShape("oversampling factor must be >= 1".into()));
    }
    let mut signs = Vec::with_capacity(ell * dim);
    for j in 0..ell {
        let mut rng = rng::substream(seed, Domain::RwhtSigns, j as u64);
        signs.extend((0..dim).map(|_| if rng.gen::<bool>() { 1i8 } else { -1i8 }));
    }
    Ok(SensingEnsemble {
        dim,
        samples: ell * dim,
        seed,
        payload: Payload::Rwht { ell, signs },
    })
}

impl<T: Scalar> SensingEnsemble<T> {
    /// Wraps caller-provided sparse rows (e.g. a discretized Radon transform).
    pub fn explicit(rows: SparseRows<T>) -> Self {
        Self {
            dim: rows.cols(),
            samples: rows.rows(),
            seed: 0,
            payload: Payload::Explicit(rows),
        }
    }

    pub(crate) fn gaussian_from_parts(dim: usize, samples: usize, seed: u64, rows: Vec<T>) -> Self {
        debug_assert_eq!(rows.len(), dim * samples);
        Self {
            dim,
            samples,
            seed,
            payload: Payload::Gaussian(rows),
        }
    }

    pub(crate) fn rwht_from_parts(dim: usize, ell: usize, seed: u64, signs: Vec<i8>) -> Self {
        Self {
            dim,
            samples: dim * ell,
            seed,
            payload: Payload::Rwht { ell, signs },
        }
    }

    pub fn kind(&self) -> EnsembleKind {
        match self.payload {
            Payload::Gaussian(_) => EnsembleKind::Gaussian,
            Payload::Rwht { .. } => EnsembleKind::Rwht,
            Payload::Explicit(_) => EnsembleKind::ExplicitMatrix,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Oversampling factor of an RWHT ensemble.
    pub fn oversampling(&self) -> Option<usize> {
        match self.payload {
            Payload::Rwht { ell, .. } => Some(ell),
            _ => None,
        }
    }

    pub(crate) fn dense_rows(&self) -> Option<&[T]> {
        match &self.payload {
            Payload::Gaussian(r) => Some(r),
            _ => None,
        }
    }

    pub(crate) fn rwht_signs(&self) -> Option<&[i8]> {
        match &self.payload {
            Payload::Rwht { signs, .. } => Some(signs),
            _ => None,
        }
    }

    pub(crate) fn sparse_rows(&self) -> Option<&SparseRows<T>> {
        match &self.payload {
            Payload::Explicit(s) => Some(s),
            _ => None,
        }
    }

    fn check_len(expected: usize, got: usize) -> Result<(), SensingError> {
        if expected == got {
            Ok(())
        } else {
            Err(SensingError::DimensionMismatch { expected, got })
        }
    }

    /// `A x`.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>, SensingError> {
        let mut out = vec![T::zero(); self.samples];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, x: &[T], out: &mut [T]) -> Result<(), SensingError> {
        Self::check_len(self.dim, x.len())?;
        Self::check_len(self.samples, out.len())?;
        match &self.payload {
            Payload::Gaussian(rows) => {
                for (o, row) in out.iter_mut().zip(rows.chunks_exact(self.dim)) {
                    *o = scalar::dot(row, x);
                }
            }
            Payload::Rwht { signs, .. } => {
                for (block, sign) in out.chunks_exact_mut(self.dim).zip(signs.chunks_exact(self.dim)) {
                    for ((o, &xi), &s) in block.iter_mut().zip(x).zip(sign) {
                        *o = if s > 0 { xi } else { -xi };
                    }
                    fwht_in_place(block)?;
                }
            }
            Payload::Explicit(sp) => {
                for (i, o) in out.iter_mut().enumerate() {
                    let (cols, vals) = sp.row(i);
                    let mut acc = T::zero();
                    for (&c, &v) in cols.iter().zip(vals) {
                        acc += v * x[c];
                    }
                    *o = acc;
                }
            }
        }
        Ok(())
    }

    /// `Aᵀ u`.
    pub fn adjoint(&self, u: &[T]) -> Result<Vec<T>, SensingError> {
        let mut out = vec![T::zero(); self.dim];
        self.adjoint_into(u, &mut out)?;
        Ok(out)
    }

    pub fn adjoint_into(&self, u: &[T], out: &mut [T]) -> Result<(), SensingError> {
        Self::check_len(self.samples, u.len())?;
        Self::check_len(self.dim, out.len())?;
        out.iter_mut().for_each(|o| *o = T::zero());
        match &self.payload {
            Payload::Gaussian(rows) => {
                for (&ui, row) in u.iter().zip(rows.chunks_exact(self.dim)) {
                    if ui == T::zero() {
                        continue;
                    }
                    for (o, &a) in out.iter_mut().zip(row) {
                        *o += ui * a;
                    }
                }
            }
            Payload::Rwht { signs, .. } => {
                // Aᵀu = Σ_j D_j H_d u_j since H_d is symmetric.
                let mut buf = vec![T::zero(); self.dim];
                for (block, sign) in u.chunks_exact(self.dim).zip(signs.chunks_exact(self.dim)) {
                    buf.copy_from_slice(block);
                    fwht_in_place(&mut buf)?;
                    for ((o, &b), &s) in out.iter_mut().zip(&buf).zip(sign) {
                        if s > 0 {
                            *o += b;
                        } else {
                            *o -= b;
                        }
                    }
                }
            }
            Payload::Explicit(sp) => {
                for (i, &ui) in u.iter().enumerate() {
                    let (cols, vals) = sp.row(i);
                    for (&c, &v) in cols.iter().zip(vals) {
                        out[c] += ui * v;
                    }
                }
            }
        }
        Ok(())
    }

    /// Dense copy of row `a_i`.
    pub fn row(&self, i: usize) -> Vec<T> {
        assert!(i < self.samples, "row {i} out of range");
        match &self.payload {
            Payload::Gaussian(rows) => rows[i * self.dim..(i + 1) * self.dim].to_vec(),
            Payload::Rwht { signs, .. } => {
                let (block, k) = (i / self.dim, i % self.dim);
                let sign = &signs[block * self.dim..(block + 1) * self.dim];
                (0..self.dim)
                    .map(|l| T::lit((fwht::hadamard_entry(k, l) * sign[l]) as f64))
                    .collect()
            }
            Payload::Explicit(sp) => {
                let mut r = vec![T::zero(); self.dim];
                let (cols, vals) = sp.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    r[c] += v;
                }
                r
            }
        }
    }

    /// `⟨a_i, x⟩`.
    pub fn row_dot(&self, i: usize, x: &[T]) -> Result<T, SensingError> {
        Self::check_len(self.dim, x.len())?;
        Ok(match &self.payload {
            Payload::Gaussian(rows) => scalar::dot(&rows[i * self.dim..(i + 1) * self.dim], x),
            Payload::Explicit(sp) => {
                let (cols, vals) = sp.row(i);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            }
            Payload::Rwht { .. } => scalar::dot(&self.row(i), x),
        })
    }
}

/// How measurements were corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseModel<T> {
    Clean,
    /// Gaussian approximation of photon counts with detector scale `S`.
    PoissonGaussian { scale: T },
}

/// Observed data `y` plus provenance.
///
/// Clean data lies in `[0, 1)`. Noisy data is `1 − ỹ/S` for raw counts `ỹ` and
/// is not clipped, so it may leave that range.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet<T> {
    pub y: Vec<T>,
    pub noise: NoiseModel<T>,
    pub seed: u64,
    pub truth: Option<Vec<T>>,
    pub truth_norm: Option<T>,
}

impl<T: Scalar> MeasurementSet<T> {
    /// Measurements with no recorded ground truth.
    pub fn from_observations(y: Vec<T>) -> Self {
        Self {
            y,
            noise: NoiseModel::Clean,
            seed: 0,
            truth: None,
            truth_norm: None,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[inline]
pub(crate) fn link<T: Scalar>(t: T) -> T {
    T::one() - (-t.max(T::zero())).exp()
}

/// `h_i(x) = 1 − exp(−⟨a_i, x⟩₊)` for every row.
pub fn forward_model<T: Scalar>(a: &SensingEnsemble<T>, x: &[T]) -> Result<Vec<T>, SensingError> {
    let mut s = a.apply(x)?;
    s.iter_mut().for_each(|v| *v = link(*v));
    Ok(s)
}

/// Simulates measurements of `x_star`.
///
/// With [`NoiseModel::PoissonGaussian`] the raw counts are
/// `ỹ_i = S e^{−t_i} + √(S e^{−t_i}) ξ_i` with `t_i = ⟨a_i, x⋆⟩₊`, and the
/// returned `y_i = 1 − ỹ_i / S`. The draw `ξ_i` comes from row `i`'s noise stream.
pub fn generate_measurements<T: Scalar>(
    a: &SensingEnsemble<T>,
    x_star: &[T],
    noise: NoiseModel<T>,
    seed: u64,
) -> Result<MeasurementSet<T>, SensingError> {
    let inner = a.apply(x_star)?;
    let y = match noise {
        NoiseModel::Clean => inner.iter().map(|&t| link(t)).collect(),
        NoiseModel::PoissonGaussian { scale } => {
            if !(scale > T::zero()) {
                return Err(SensingError::NonPositiveScale(scale.as_f64()));
            }
            inner
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let mean = scale * (-t.max(T::zero())).exp();
                    let mut rng = rng::substream(seed, Domain::Noise, i as u64);
                    let xi = T::lit(rng::standard_normal(&mut rng));
                    let counts = mean + mean.sqrt() * xi;
                    T::one() - counts / scale
                })
                .collect()
        }
    };
    Ok(MeasurementSet {
        y,
        noise,
        seed,
        truth: Some(x_star.to_vec()),
        truth_norm: Some(scalar::norm(x_star)),
    })
}

/// A signal of norm exactly `r` (up to rounding) pointing in a seeded uniform direction.
pub fn sample_signal<T: Scalar>(dim: usize, r: T, seed: u64) -> Vec<T> {
    assert!(dim >= 1, "signal dimension must be >= 1");
    if r == T::zero() {
        return vec![T::zero(); dim];
    }
    for attempt in 0u64.. {
        let mut rng = rng::substream(seed, Domain::Signal, attempt);
        let g: Vec<f64> = (0..dim).map(|_| rng::standard_normal(&mut rng)).collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            return g.iter().map(|v| r * T::lit(v / n)).collect();
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng::substream(seed, Domain::Probe, 0);
        (0..len).map(|_| rng::standard_normal(&mut rng)).collect()
    }

    #[test]
    fn gaussian_is_deterministic() {
        let a = gaussian_ensemble::<f64>(2, 3, 7);
        let b = gaussian_ensemble::<f64>(2, 3, 7);
        assert_eq!(a, b);
        assert_ne!(a, gaussian_ensemble::<f64>(2, 3, 8));
    }

    #[test]
    fn gaussian_column_variance() {
        let a = gaussian_ensemble::<f64>(64, 4096, 1);
        for j in 0..64 {
            let col: Vec<f64> = (0..4096).map(|i| a.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / 4096.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4095.0;
            assert!((0.9..=1.1).contains(&var), "column {j} variance {var}");
        }
    }

    /// Largest singular value via power iteration on AᵀA.
    fn spectral_norm(a: &SensingEnsemble<f64>) -> f64 {
        let mut v = probe(a.dim(), 99);
        let mut s = 0.0;
        for _ in 0..300 {
            let n = scalar::norm(&v);
            v.iter_mut().for_each(|x| *x /= n);
            let w = a.adjoint(&a.apply(&v).unwrap()).unwrap();
            s = scalar::norm(&w).sqrt();
            v = w;
        }
        s
    }

    #[test]
    fn gaussian_spectral_norm() {
        let a = gaussian_ensemble::<f64>(64, 4096, 1);
        let s = spectral_norm(&a) / 4096f64.sqrt();
        assert!(s <= 1.0 + 2.0 * (64.0f64 / 4096.0).sqrt() + 0.1, "{s}");
    }

    #[test]
    fn rwht_scalar_case() {
        let a = rwht_ensemble::<f64>(1, 1, 5).unwrap();
        let r = a.row(0);
        assert!(r == vec![1.0] || r == vec![-1.0]);
        assert_eq!(a.apply(&[2.0]).unwrap()[0], 2.0 * r[0]);
    }

    #[test]
    fn rwht_rejects_bad_dim() {
        assert_eq!(
            rwht_ensemble::<f64>(3, 1, 0).unwrap_err(),
            SensingError::NotPowerOfTwo(3)
        );
    }

    #[test]
    fn rwht_matches_dense_rows() {
        let a = rwht_ensemble::<f64>(8, 2, 3).unwrap();
        for t in 0..20 {
            let x = probe(8, t);
            let fast = a.apply(&x).unwrap();
            for i in 0..16 {
                let dense: f64 = a.row(i).iter().zip(&x).map(|(p, q)| p * q).sum();
                assert!((fast[i] - dense).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rwht_rows_have_unit_entries() {
        let a = rwht_ensemble::<f64>(16, 3, 11).unwrap();
        for i in 0..a.samples() {
            let r = a.row(i);
            assert!(r.iter().all(|v| v.abs() == 1.0));
            assert_eq!(r.iter().map(|v| v * v).sum::<f64>(), 16.0);
        }
    }

    #[test]
    fn adjoint_consistency_all_kinds() {
        let sparse = SparseRows::from_dense(&[
            vec![1.0, 0.0, 2.0, 0.0],
            vec![0.0, 0.5, 0.0, 0.0],
            vec![3.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let ensembles = vec![
            gaussian_ensemble::<f64>(16, 40, 1),
            rwht_ensemble::<f64>(16, 3, 2).unwrap(),
            SensingEnsemble::explicit(sparse),
        ];
        for a in &ensembles {
            for t in 0..100 {
                let x = probe(a.dim(), 1000 + t);
                let u = probe(a.samples(), 2000 + t);
                let lhs = scalar::dot(&a.apply(&x).unwrap(), &u);
                let rhs = scalar::dot(&x, &a.adjoint(&u).unwrap());
                let scale = scalar::norm(&x) * scalar::norm(&u);
                assert!((lhs - rhs).abs() <= 1e-10 * scale, "{:?}", a.kind());
            }
        }
    }

    #[test]
    fn gaussian_row_norms_concentrate() {
        let a = gaussian_ensemble::<f64>(64, 2000, 4);
        for i in 0..a.samples() {
            let n = scalar::norm(&a.row(i));
            assert!((n - 8.0).abs() <= 4.0, "row {i} norm {n}");
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = gaussian_ensemble::<f64>(4, 4, 0);
        assert_eq!(
            a.apply(&[1.0; 3]).unwrap_err(),
            SensingError::DimensionMismatch { expected: 4, got: 3 }
        );
        assert!(forward_model(&a, &[0.0; 5]).is_err());
    }

    #[test]
    fn forward_model_examples() {
        let a = gaussian_ensemble::<f64>(5, 10, 0);
        assert!(forward_model(&a, &[0.0; 5]).unwrap().iter().all(|&h| h == 0.0));
        let sp = SparseRows::from_dense(&[vec![1.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let a = SensingEnsemble::explicit(sp);
        let h = forward_model(&a, &[2f64.ln(), 0.0]).unwrap();
        assert!((h[0] - 0.5).abs() < 1e-15);
        let h = forward_model(&a, &[5.0, 0.0]).unwrap();
        assert_eq!(h[1], 0.0);
    }

    #[test]
    fn forward_model_is_monotone_under_scaling() {
        let a = gaussian_ensemble::<f64>(8, 50, 2);
        let x = probe(8, 4);
        let base = a.apply(&x).unwrap();
        let h1 = forward_model(&a, &x).unwrap();
        let x2: Vec<f64> = x.iter().map(|v| 1.7 * v).collect();
        let h2 = forward_model(&a, &x2).unwrap();
        for i in 0..50 {
            if base[i] >= 0.0 {
                assert!(h2[i] >= h1[i]);
            }
        }
    }

    #[test]
    fn clean_measurements() {
        let a = gaussian_ensemble::<f64>(6, 30, 1);
        let zero = generate_measurements(&a, &[0.0; 6], NoiseModel::Clean, 0).unwrap();
        assert!(zero.y.iter().all(|&v| v == 0.0));
        let x = sample_signal(6, 3.0, 2);
        let m = generate_measurements(&a, &x, NoiseModel::Clean, 0).unwrap();
        assert!(m.y.iter().all(|&v| (0.0..1.0).contains(&v)));
        assert!((m.truth_norm.unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_requires_positive_scale() {
        let a = gaussian_ensemble::<f64>(2, 3, 1);
        let err = generate_measurements(&a, &[1.0, 0.0], NoiseModel::PoissonGaussian { scale: 0.0 }, 0);
        assert_eq!(err.unwrap_err(), SensingError::NonPositiveScale(0.0));
    }

    #[test]
    fn noisy_mean_matches_moment() {
        let d = 8;
        let m = 10_000;
        let r = 1.5;
        let a = gaussian_ensemble::<f64>(d, m, 21);
        let x = sample_signal(d, r, 22);
        let meas = generate_measurements(&a, &x, NoiseModel::PoissonGaussian { scale: 1e5 }, 23).unwrap();
        let vals: Vec<f64> = meas.y.iter().map(|y| 1.0 - y).collect();
        let mean = vals.iter().sum::<f64>() / m as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let se = (var / m as f64).sqrt();
        let expect = crate::analytics::exp_pos_moment(r) + 0.5; // rows with ⟨a,x⟩ < 0 contribute 1
        assert!((mean - expect).abs() <= 4.0 * se, "mean {mean} expect {expect} se {se}");
    }

    #[test]
    fn sample_signal_contract() {
        let x = sample_signal::<f64>(5, 2.0, 1);
        assert!((scalar::norm(&x) - 2.0).abs() < 1e-12);
        assert_eq!(x, sample_signal::<f64>(5, 2.0, 1));
        assert!(sample_signal::<f64>(5, 0.0, 1).iter().all(|&v| v == 0.0));
    }
}
