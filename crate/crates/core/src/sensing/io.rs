//! On-disk form of ensembles and measurement sets.
//!
//! Binary container, all integers and floats little-endian:
//!
//! ```text
//! ensemble    := "CTSE" u16:version u8:kind u8:reserved u64:dim u64:samples u64:seed payload
//!   kind 0 (gaussian)  payload := f64[samples * dim]            row-major
//!   kind 1 (rwht)      payload := u64:ell  i8[ell * dim]        sign vectors
//!   kind 2 (explicit)  payload := u64:nnz u64[samples + 1]:row_ptr u64[nnz]:col f64[nnz]:val
//!
//! measurements := "CTSM" u16:version u8:noise u8:has_truth f64:scale u64:seed u64:len f64[len]:y
//!                 [u64:dim f64[dim]:truth]                     when has_truth = 1
//!   noise 0 = clean (scale stored as 0), 1 = poisson-gaussian
//! ```
//!
//! Values are always stored as `f64`, whatever the in-memory scalar type.
//! The JSON sidecar ([`EnsembleMetadata`], [`MeasurementMetadata`]) carries the
//! same header fields in readable form.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EnsembleKind, MeasurementSet, NoiseModel, SensingEnsemble, SparseRows};
use crate::scalar::Scalar;

pub const ENSEMBLE_MAGIC: [u8; 4] = *b"CTSE";
pub const MEASUREMENT_MAGIC: [u8; 4] = *b"CTSM";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown tag {0}")]
    UnknownTag(u8),
    #[error("corrupt payload: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMetadata {
    pub format_version: u16,
    pub kind: EnsembleKind,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oversampling: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nnz: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementMetadata {
    pub format_version: u16,
    pub noise: NoiseModel<f64>,
    pub samples: usize,
    pub seed: u64,
    pub has_truth: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truth_norm: Option<f64>,
}

struct Writer<W>(W);

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> io::Result<()> {
        self.0.write_all(b)
    }
    fn u8(&mut self, v: u8) -> io::Result<()> {
        self.bytes(&[v])
    }
    fn u16(&mut self, v: u16) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
}

struct Reader<R>(R);

impl<R: Read> Reader<R> {
    fn array<const N: usize>(&mut self) -> io::Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }
    fn u8(&mut self) -> io::Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u16(&mut self) -> io::Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn usize(&mut self) -> Result<usize, FormatError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| FormatError::Corrupt(format!("length {v} overflows usize")))
    }
    fn f64(&mut self) -> io::Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

fn kind_tag(kind: EnsembleKind) -> u8 {
    match kind {
        EnsembleKind::Gaussian => 0,
        EnsembleKind::Rwht => 1,
        EnsembleKind::ExplicitMatrix => 2,
    }
}

pub fn write_ensemble<T: Scalar, W: Write>(ens: &SensingEnsemble<T>, out: W) -> Result<(), FormatError> {
    let mut w = Writer(out);
    w.bytes(&ENSEMBLE_MAGIC)?;
    w.u16(FORMAT_VERSION)?;
    w.u8(kind_tag(ens.kind()))?;
    w.u8(0)?;
    w.u64(ens.dim() as u64)?;
    w.u64(ens.samples() as u64)?;
    w.u64(ens.seed())?;
    match ens.kind() {
        EnsembleKind::Gaussian => {
            for &v in ens.dense_rows().unwrap() {
                w.f64(v.as_f64())?;
            }
        }
        EnsembleKind::Rwht => {
            w.u64(ens.oversampling().unwrap() as u64)?;
            let signs: Vec<u8> = ens.rwht_signs().unwrap().iter().map(|&s| s as u8).collect();
            w.bytes(&signs)?;
        }
        EnsembleKind::ExplicitMatrix => {
            let (row_ptr, cols, vals) = ens.sparse_rows().unwrap().raw_parts();
            w.u64(vals.len() as u64)?;
            for &p in row_ptr {
                w.u64(p as u64)?;
            }
            for &c in cols {
                w.u64(c as u64)?;
            }
            for &v in vals {
                w.f64(v.as_f64())?;
            }
        }
    }
    Ok(())
}

pub fn read_ensemble<T: Scalar, R: Read>(input: R) -> Result<SensingEnsemble<T>, FormatError> {
    let mut r = Reader(input);
    let magic = r.array::<4>()?;
    if magic != ENSEMBLE_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let kind = r.u8()?;
    let _reserved = r.u8()?;
    let dim = r.usize()?;
    let samples = r.usize()?;
    let seed = r.u64()?;
    match kind {
        0 => {
            let n = dim
                .checked_mul(samples)
                .ok_or_else(|| FormatError::Corrupt("shape overflow".into()))?;
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                rows.push(T::lit(r.f64()?));
            }
            Ok(SensingEnsemble::gaussian_from_parts(dim, samples, seed, rows))
        }
        1 => {
            let ell = r.usize()?;
            if !dim.is_power_of_two() || ell.checked_mul(dim) != Some(samples) {
                return Err(FormatError::Corrupt("rwht shape".into()));
            }
            let mut raw = vec![0u8; samples];
            r.0.read_exact(&mut raw)?;
            let signs: Vec<i8> = raw.into_iter().map(|b| b as i8).collect();
            if signs.iter().any(|&s| s != 1 && s != -1) {
                return Err(FormatError::Corrupt("rwht signs must be +-1".into()));
            }
            Ok(SensingEnsemble::rwht_from_parts(dim, ell, seed, signs))
        }
        2 => {
            let nnz = r.usize()?;
            let mut row_ptr = Vec::with_capacity(samples + 1);
            for _ in 0..=samples {
                row_ptr.push(r.usize()?);
            }
            let mut cols = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                cols.push(r.usize()?);
            }
            let mut vals = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                vals.push(T::lit(r.f64()?));
            }
            let sp = SparseRows::from_raw_parts(dim, row_ptr, cols, vals)
                .map_err(|e| FormatError::Corrupt(e.to_string()))?;
            Ok(SensingEnsemble::explicit(sp))
        }
        t => Err(FormatError::UnknownTag(t)),
    }
}

pub fn ensemble_metadata<T: Scalar>(ens: &SensingEnsemble<T>) -> EnsembleMetadata {
    EnsembleMetadata {
        format_version: FORMAT_VERSION,
        kind: ens.kind(),
        dim: ens.dim(),
        samples: ens.samples(),
        seed: ens.seed(),
        oversampling: ens.oversampling(),
        nnz: ens.sparse_rows().map(SparseRows::nnz),
    }
}

pub fn write_measurements<T: Scalar, W: Write>(meas: &MeasurementSet<T>, out: W) -> Result<(), FormatError> {
    let mut w = Writer(out);
    w.bytes(&MEASUREMENT_MAGIC)?;
    w.u16(FORMAT_VERSION)?;
    let (tag, scale) = match meas.noise {
        NoiseModel::Clean => (0u8, 0.0),
        NoiseModel::PoissonGaussian { scale } => (1u8, scale.as_f64()),
    };
    w.u8(tag)?;
    w.u8(meas.truth.is_some() as u8)?;
    w.f64(scale)?;
    w.u64(meas.seed)?;
    w.u64(meas.y.len() as u64)?;
    for &v in &meas.y {
        w.f64(v.as_f64())?;
    }
    if let Some(truth) = &meas.truth {
        w.u64(truth.len() as u64)?;
        for &v in truth {
            w.f64(v.as_f64())?;
        }
    }
    Ok(())
}

pub fn read_measurements<T: Scalar, R: Read>(input: R) -> Result<MeasurementSet<T>, FormatError> {
    let mut r = Reader(input);
    let magic = r.array::<4>()?;
    if magic != MEASUREMENT_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let tag = r.u8()?;
    let has_truth = r.u8()?;
    let scale = r.f64()?;
    let noise = match tag {
        0 => NoiseModel::Clean,
        1 => NoiseModel::PoissonGaussian { scale: T::lit(scale) },
        t => return Err(FormatError::UnknownTag(t)),
    };
    let seed = r.u64()?;
    let len = r.usize()?;
    let mut y = Vec::with_capacity(len);
    for _ in 0..len {
        y.push(T::lit(r.f64()?));
    }
    let truth = match has_truth {
        0 => None,
        1 => {
            let d = r.usize()?;
            let mut t = Vec::with_capacity(d);
            for _ in 0..d {
                t.push(T::lit(r.f64()?));
            }
            Some(t)
        }
        t => return Err(FormatError::UnknownTag(t)),
    };
    let truth_norm = truth.as_deref().map(crate::scalar::norm);
    Ok(MeasurementSet {
        y,
        noise,
        seed,
        truth,
        truth_norm,
    })
}

pub fn measurement_metadata<T: Scalar>(meas: &MeasurementSet<T>) -> MeasurementMetadata {
    MeasurementMetadata {
        format_version: FORMAT_VERSION,
        noise: match meas.noise {
            NoiseModel::Clean => NoiseModel::Clean,
            NoiseModel::PoissonGaussian { scale } => NoiseModel::PoissonGaussian { scale: scale.as_f64() },
        },
        samples: meas.y.len(),
        seed: meas.seed,
        has_truth: meas.truth.is_some(),
        truth_norm: meas.truth_norm.map(Scalar::as_f64),
    }
}

/// Writes `<stem>.bin` and `<stem>.json` into `dir`.
pub fn save_ensemble<T: Scalar>(ens: &SensingEnsemble<T>, dir: &Path, stem: &str) -> Result<(), FormatError> {
    let mut buf = io::BufWriter::new(fs::File::create(dir.join(format!("{stem}.bin")))?);
    write_ensemble(ens, &mut buf)?;
    buf.flush()?;
    fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&ensemble_metadata(ens))?,
    )?;
    Ok(())
}

pub fn load_ensemble<T: Scalar>(dir: &Path, stem: &str) -> Result<SensingEnsemble<T>, FormatError> {
    let f = io::BufReader::new(fs::File::open(dir.join(format!("{stem}.bin")))?);
    read_ensemble(f)
}

/// Writes `<stem>.bin` and `<stem>.json` into `dir`.
pub fn save_measurements<T: Scalar>(meas: &MeasurementSet<T>, dir: &Path, stem: &str) -> Result<(), FormatError> {
    let mut buf = io::BufWriter::new(fs::File::create(dir.join(format!("{stem}.bin")))?);
    write_measurements(meas, &mut buf)?;
    buf.flush()?;
    fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&measurement_metadata(meas))?,
    )?;
    Ok(())
}

pub fn load_measurements<T: Scalar>(dir: &Path, stem: &str) -> Result<MeasurementSet<T>, FormatError> {
    let f = io::BufReader::new(fs::File::open(dir.join(format!("{stem}.bin")))?);
    read_measurements(f)
}
