use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gd_grid_best, write_csv_artifact, ExperimentError, Instance, Provenance};
use crate::rng::child_seed;
use crate::sensing::{EnsembleKind, NoiseModel};
use crate::solvers::{polyak_sgm, SolveOptions, SolveStatus, StopRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseTransitionConfig {
    pub seed: u64,
    pub dim: usize,
    pub signal_norms: Vec<f64>,
    pub ratios: Vec<usize>,
    pub trials: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub polyak_eta: f64,
    /// Exponents `j` of the baseline stepsize `2^j`.
    pub gd_grid: Vec<i32>,
    pub ensemble: EnsembleKind,
}

impl Default for PhaseTransitionConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl PhaseTransitionConfig {
    pub fn desk() -> Self {
        Self {
            seed: 0,
            dim: 32,
            signal_norms: vec![1.0, 2.0, 4.0, 8.0],
            ratios: vec![2, 4, 8, 16],
            trials: 25,
            max_iters: 10_000,
            tol: 1e-5,
            polyak_eta: 1.0,
            gd_grid: (-3..=3).collect(),
            ensemble: EnsembleKind::Gaussian,
        }
    }

    pub fn paper() -> Self {
        Self {
            dim: 128,
            signal_norms: (2..=16).map(|k| k as f64 / 2.0).collect(),
            ratios: vec![2, 4, 6, 8, 10, 12, 14, 16],
            ..Self::desk()
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.signal_norms.is_empty() || self.ratios.is_empty() || self.trials == 0 || self.dim == 0 {
            return Err(ExperimentError::Config("phase-transition grids must be nonempty".into()));
        }
        if self.gd_grid.is_empty() || self.max_iters == 0 || !(self.tol > 0.0) {
            return Err(ExperimentError::Config("invalid budget, tolerance or stepsize grid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseCell {
    pub signal_norm: f64,
    pub ratio: usize,
    pub trials: usize,
    pub polyak_successes: usize,
    pub gd_successes: usize,
}

impl PhaseCell {
    pub fn polyak_rate(&self) -> f64 {
        self.polyak_successes as f64 / self.trials as f64
    }

    pub fn gd_rate(&self) -> f64 {
        self.gd_successes as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTransitionResult {
    pub cells: Vec<PhaseCell>,
}

impl PhaseTransitionResult {
    pub fn cell(&self, signal_norm: f64, ratio: usize) -> Option<&PhaseCell> {
        self.cells.iter().find(|c| c.signal_norm == signal_norm && c.ratio == ratio)
    }

    pub fn write(&self, dir: &Path, prov: &Provenance) -> std::io::Result<()> {
        let lines: Vec<String> = self
            .cells
            .iter()
            .map(|c| {
                format!(
                    "{},{},{},{},{}",
                    c.signal_norm,
                    c.ratio,
                    c.trials,
                    c.polyak_rate(),
                    c.gd_rate()
                )
            })
            .collect();
        write_csv_artifact(
            dir,
            "phase_transition.csv",
            prov,
            "signal_norm,ratio,trials,polyak_success,gd_success",
            &lines,
        )
    }
}

/// Per-trial outcome: (Polyak succeeded, GD succeeded for some grid value).
fn trial(cfg: &PhaseTransitionConfig, r: f64, ratio: usize, seed: u64) -> Result<(bool, bool), ExperimentError> {
    let inst = Instance::new(cfg.ensemble, cfg.dim, ratio * cfg.dim, r, NoiseModel::Clean, seed)?;
    let obj = inst.objective();
    let x0 = vec![0.0; cfg.dim];
    let stop = StopRule::Distance(cfg.tol);
    let opts = SolveOptions::new(cfg.polyak_eta, cfg.max_iters)
        .with_stop(stop)
        .with_trace_every(cfg.max_iters);
    let polyak = match polyak_sgm(&obj, &x0, &opts) {
        Ok((_, t)) => matches!(t.status, Some(SolveStatus::ToleranceMet | SolveStatus::ConvergedExact)),
        Err(_) => false,
    };
    let gd = cfg.gd_grid.iter().any(|&j| {
        gd_grid_best(&obj, &x0, r, &[j], cfg.max_iters, Some(stop), cfg.max_iters)
            .is_some_and(|(_, _, t)| matches!(t.status, Some(SolveStatus::ToleranceMet | SolveStatus::ConvergedExact)))
    });
    Ok((polyak, gd))
}

/// Success rates of Polyak (fixed `η`) and grid-tuned gradient descent on
/// each `(‖x⋆‖, m/d)` cell.
pub fn run_phase_transition(cfg: &PhaseTransitionConfig) -> Result<PhaseTransitionResult, ExperimentError> {
    cfg.validate()?;
    let cells: Vec<(usize, f64, usize)> = cfg
        .signal_norms
        .iter()
        .flat_map(|&r| cfg.ratios.iter().map(move |&q| (r, q)))
        .enumerate()
        .map(|(i, (r, q))| (i, r, q))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let outcomes: Vec<(bool, bool)> = tasks
        .par_iter()
        .map(|&(c, t)| {
            let (idx, r, q) = cells[c];
            trial(cfg, r, q, child_seed(child_seed(cfg.seed, idx as u64), t as u64))
        })
        .collect::<Result<_, _>>()?;
    let cells = cells
        .iter()
        .map(|&(idx, r, q)| {
            let chunk = &outcomes[idx * cfg.trials..(idx + 1) * cfg.trials];
            PhaseCell {
                signal_norm: r,
                ratio: q,
                trials: cfg.trials,
                polyak_successes: chunk.iter().filter(|o| o.0).count(),
                gd_successes: chunk.iter().filter(|o| o.1).count(),
            }
        })
        .collect();
    Ok(PhaseTransitionResult { cells })
}
