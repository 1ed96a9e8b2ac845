//! Experiment drivers behind the `ctsgm` command-line tool.
//!
//! Each experiment takes a serializable config and returns an in-memory
//! result that can be written out as CSV (plus JSON summaries). Every CSV
//! begins with a `# config_hash=… seed=…` line. Trials fan out over rayon
//! and are collected in index order, so output does not depend on the
//! thread count.

mod ct;
mod convergence;
mod noisy;
mod phase;
mod robustness;

pub use convergence::{
    run_convergence, ConvergenceConfig, ConvergenceResult, ConvergenceRun, MethodTrace, StepsizeMode,
};
pub use ct::{run_ct_reconstruction, CtConfig, CtResult, CtRun, CtSnapshot};
pub use noisy::{run_noisy, NoisyConfig, NoisyResult, NoisyRun};
pub use phase::{run_phase_transition, PhaseCell, PhaseTransitionConfig, PhaseTransitionResult};
pub use robustness::{run_robustness, RobustnessConfig, RobustnessResult, RobustnessRow};

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytics::{gd_stepsize_schedule, GdSchedule};
use crate::loss::Objective;
use crate::sensing::{
    gaussian_ensemble, generate_measurements, rwht_ensemble, sample_signal, EnsembleKind, MeasurementSet, NoiseModel,
    SensingEnsemble,
};
use crate::solvers::{gradient_descent, GdOptions, SolveTrace, StopRule};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Desk,
    Paper,
}

/// On-disk experiment description; the `kind` key selects the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    PhaseTransition(PhaseTransitionConfig),
    Convergence(ConvergenceConfig),
    Robustness(RobustnessConfig),
    Noisy(NoisyConfig),
    Ct(CtConfig),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PhaseTransition(_) => "phase-transition",
            Self::Convergence(_) => "convergence",
            Self::Robustness(_) => "robustness",
            Self::Noisy(_) => "noisy",
            Self::Ct(_) => "ct",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::PhaseTransition(c) => c.seed,
            Self::Convergence(c) => c.seed,
            Self::Robustness(c) => c.seed,
            Self::Noisy(c) => c.seed,
            Self::Ct(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Self::PhaseTransition(c) => c.seed = seed,
            Self::Convergence(c) => c.seed = seed,
            Self::Robustness(c) => c.seed = seed,
            Self::Noisy(c) => c.seed = seed,
            Self::Ct(c) => c.seed = seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configs serialize");
        let digest = Sha256::digest(&bytes);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Hash and seed stamped on every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seed(),
        }
    }

    pub fn header_line(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }
}

pub(crate) fn write_csv_artifact(
    dir: &Path,
    name: &str,
    prov: &Provenance,
    header: &str,
    lines: &[String],
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = io::BufWriter::new(fs::File::create(dir.join(name))?);
    writeln!(w, "{}", prov.header_line())?;
    writeln!(w, "{header}")?;
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub(crate) fn write_json_artifact<S: Serialize>(dir: &Path, name: &str, prov: &Provenance, body: &S) -> io::Result<()> {
    #[derive(Serialize)]
    struct Wrapped<'a, S> {
        #[serde(flatten)]
        prov: &'a Provenance,
        #[serde(flatten)]
        body: &'a S,
    }
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(&Wrapped { prov, body }).map_err(io::Error::other)?;
    fs::write(dir.join(name), text + "\n")
}

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Synthetic recovery instance with ground truth.
pub struct Instance {
    pub ensemble: SensingEnsemble<f64>,
    pub measurements: MeasurementSet<f64>,
}

impl Instance {
    pub fn new(
        kind: EnsembleKind,
        dim: usize,
        samples: usize,
        signal_norm: f64,
        noise: NoiseModel<f64>,
        seed: u64,
    ) -> Result<Self, ExperimentError> {
        let ensemble = match kind {
            EnsembleKind::Gaussian => gaussian_ensemble(dim, samples, seed),
            EnsembleKind::Rwht => {
                if !samples.is_multiple_of(dim) {
                    return Err(ExperimentError::Config(format!(
                        "RWHT needs samples to be a multiple of dim ({samples} vs {dim})"
                    )));
                }
                rwht_ensemble(dim, samples / dim, seed).map_err(|e| ExperimentError::Config(e.to_string()))?
            }
            EnsembleKind::ExplicitMatrix => {
                return Err(ExperimentError::Config(
                    "synthetic experiments need a gaussian or rwht ensemble".into(),
                ))
            }
        };
        let x = sample_signal(dim, signal_norm, seed);
        let measurements = generate_measurements(&ensemble, &x, noise, seed)
            .map_err(|e| ExperimentError::Numerical(e.to_string()))?;
        Ok(Self { ensemble, measurements })
    }

    pub fn objective(&self) -> Objective<'_, f64> {
        Objective::l1(&self.ensemble, &self.measurements).expect("sizes agree by construction")
    }

    pub fn truth(&self) -> &[f64] {
        self.measurements.truth.as_deref().expect("synthetic instances carry the truth")
    }
}

/// Baseline schedule for grid exponent `j`: the closed-form first step,
/// then `2^j` (i.e. `c₀ = 2^j e^{5r}`).
pub fn gd_grid_schedule(signal_norm: f64, j: i32) -> GdSchedule<f64> {
    GdSchedule {
        first: gd_stepsize_schedule(signal_norm, 1.0).first,
        rest: 2f64.powi(j),
    }
}

/// Gradient descent over a stepsize grid; keeps the run with the smallest
/// final distance (or final loss without truth). Diverging runs are skipped.
pub(crate) fn gd_grid_best(
    obj: &Objective<'_, f64>,
    x0: &[f64],
    signal_norm: f64,
    grid: &[i32],
    max_iters: usize,
    stop: Option<StopRule<f64>>,
    trace_every: usize,
) -> Option<(i32, Vec<f64>, SolveTrace<f64>)> {
    let mut best: Option<(f64, i32, Vec<f64>, SolveTrace<f64>)> = None;
    for &j in grid {
        let mut opts = GdOptions::new(gd_grid_schedule(signal_norm, j), max_iters).with_trace_every(trace_every);
        opts.stop = stop;
        let Ok((x, trace)) = gradient_descent(obj, x0, &opts, None) else {
            continue;
        };
        let score = trace.final_dist().or(trace.final_value()).unwrap_or(f64::INFINITY);
        if !score.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, j, x, trace));
        }
    }
    best.map(|(_, j, x, t)| (j, x, t))
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Population standard deviation.
pub(crate) fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}
