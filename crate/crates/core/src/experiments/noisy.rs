use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gd_grid_best, median, opt, write_csv_artifact, write_json_artifact, ExperimentError, Instance, Provenance};
use crate::rng::child_seed;
use crate::scalar;
use crate::sensing::{EnsembleKind, NoiseModel};
use crate::solvers::{polyak_sgm_noopt_with, SolveTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoisyConfig {
    pub seed: u64,
    pub dim: usize,
    pub ratio: usize,
    pub signal_norms: Vec<f64>,
    /// Detector scales `S`.
    pub scales: Vec<f64>,
    pub trials: usize,
    pub eta: f64,
    pub t_inner: usize,
    pub t_outer: usize,
    /// Gradient-descent iterations; defaults to `t_inner · t_outer`.
    pub gd_budget: Option<usize>,
    pub gd_grid: Vec<i32>,
    pub trace_every: usize,
    pub ensemble: EnsembleKind,
}

impl Default for NoisyConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl NoisyConfig {
    pub fn desk() -> Self {
        Self {
            seed: 0,
            dim: 64,
            ratio: 8,
            signal_norms: vec![2.0, 3.0],
            scales: vec![1e5],
            trials: 10,
            eta: 1.0,
            t_inner: 1000,
            t_outer: 10,
            gd_budget: None,
            gd_grid: (-3..=3).collect(),
            trace_every: 10,
            ensemble: EnsembleKind::Gaussian,
        }
    }

    pub fn paper() -> Self {
        Self {
            dim: 128,
            signal_norms: vec![2.0, 3.0, 4.0, 5.0],
            trials: 1,
            ..Self::desk()
        }
    }

    fn budget(&self) -> usize {
        self.gd_budget.unwrap_or(self.t_inner * self.t_outer)
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.signal_norms.is_empty() || self.scales.is_empty() || self.trials == 0 || self.dim == 0 {
            return Err(ExperimentError::Config("noisy grids must be nonempty".into()));
        }
        if self.scales.iter().any(|&s| !(s > 0.0)) {
            return Err(ExperimentError::Config("detector scales must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) || self.t_inner == 0 || self.t_outer == 0 {
            return Err(ExperimentError::Config("need η in (0, 1] and positive budgets".into()));
        }
        if self.gd_grid.is_empty() || self.trace_every == 0 || self.budget() == 0 {
            return Err(ExperimentError::Config("bad gradient-descent settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NoisyRun {
    pub signal_norm: f64,
    pub scale: f64,
    pub trial: usize,
    /// Distance of each method's returned estimate.
    pub noopt_dist: f64,
    pub gd_dist: f64,
    /// First recorded evaluation count within twice the method's own final distance.
    pub noopt_evals_to_2x: usize,
    pub gd_evals_to_2x: usize,
    pub gd_exponent: i32,
    pub noopt_trace: SolveTrace<f64>,
    pub gd_trace: SolveTrace<f64>,
}

#[derive(Debug, Clone)]
pub struct NoisyResult {
    pub runs: Vec<NoisyRun>,
}

#[derive(Serialize)]
struct NoisySummary {
    runs: Vec<NoisySummaryRow>,
    median_noopt_evals_to_2x: f64,
    median_gd_evals_to_2x: f64,
}

#[derive(Serialize)]
struct NoisySummaryRow {
    signal_norm: f64,
    scale: f64,
    trial: usize,
    noopt_dist: f64,
    gd_dist: f64,
    noopt_evals_to_2x: usize,
    gd_evals_to_2x: usize,
    gd_exponent: i32,
}

impl NoisyResult {
    pub fn median_noopt_evals(&self) -> f64 {
        median(&self.runs.iter().map(|r| r.noopt_evals_to_2x as f64).collect::<Vec<_>>())
    }

    pub fn median_gd_evals(&self) -> f64 {
        median(&self.runs.iter().map(|r| r.gd_evals_to_2x as f64).collect::<Vec<_>>())
    }

    pub fn write(&self, dir: &Path, prov: &Provenance) -> std::io::Result<()> {
        for run in &self.runs {
            let mut lines = Vec::new();
            for (method, trace) in [("noopt", &run.noopt_trace), ("gd", &run.gd_trace)] {
                for r in &trace.records {
                    lines.push(format!("{method},{},{:e},{}", r.k, r.f, opt(r.dist)));
                }
            }
            let name = format!("noisy_r{}_s{:e}_t{}.csv", run.signal_norm, run.scale, run.trial);
            write_csv_artifact(dir, &name, prov, "method,evals,f,dist", &lines)?;
        }
        let summary = NoisySummary {
            runs: self
                .runs
                .iter()
                .map(|r| NoisySummaryRow {
                    signal_norm: r.signal_norm,
                    scale: r.scale,
                    trial: r.trial,
                    noopt_dist: r.noopt_dist,
                    gd_dist: r.gd_dist,
                    noopt_evals_to_2x: r.noopt_evals_to_2x,
                    gd_evals_to_2x: r.gd_evals_to_2x,
                    gd_exponent: r.gd_exponent,
                })
                .collect(),
            median_noopt_evals_to_2x: self.median_noopt_evals(),
            median_gd_evals_to_2x: self.median_gd_evals(),
        };
        write_json_artifact(dir, "noisy_summary.json", prov, &summary)
    }
}

fn first_within(trace: &SolveTrace<f64>, level: f64) -> usize {
    trace.first_k_within(level).unwrap_or(trace.evals)
}

fn one_run(cfg: &NoisyConfig, r: f64, scale: f64, trial: usize, seed: u64) -> Result<NoisyRun, ExperimentError> {
    let noise = NoiseModel::PoissonGaussian { scale };
    let inst = Instance::new(cfg.ensemble, cfg.dim, cfg.ratio * cfg.dim, r, noise, seed)?;
    let obj = inst.objective();
    let truth = inst.truth();
    let x0 = vec![0.0; cfg.dim];

    let out = polyak_sgm_noopt_with(&obj, &x0, 0.0, cfg.eta, cfg.t_inner, cfg.t_outer, false, cfg.trace_every)
        .map_err(|e| ExperimentError::Numerical(e.to_string()))?;
    let noopt_dist = scalar::dist(&out.x, truth);

    let (gd_exponent, gd_x, gd_trace) = gd_grid_best(&obj, &x0, r, &cfg.gd_grid, cfg.budget(), None, cfg.trace_every)
        .ok_or_else(|| ExperimentError::Numerical("every gradient-descent stepsize diverged".into()))?;
    let gd_dist = scalar::dist(&gd_x, truth);

    Ok(NoisyRun {
        signal_norm: r,
        scale,
        trial,
        noopt_dist,
        gd_dist,
        noopt_evals_to_2x: first_within(&out.trace, 2.0 * noopt_dist),
        gd_evals_to_2x: first_within(&gd_trace, 2.0 * gd_dist),
        gd_exponent,
        noopt_trace: out.trace,
        gd_trace,
    })
}

/// The unknown-optimum Polyak method against grid-tuned gradient descent
/// on measurements with photon-count noise.
pub fn run_noisy(cfg: &NoisyConfig) -> Result<NoisyResult, ExperimentError> {
    cfg.validate()?;
    let mut tasks = Vec::new();
    for &r in &cfg.signal_norms {
        for &s in &cfg.scales {
            for t in 0..cfg.trials {
                tasks.push((r, s, t));
            }
        }
    }
    let runs = tasks
        .par_iter()
        .enumerate()
        .map(|(i, &(r, s, t))| one_run(cfg, r, s, t, child_seed(cfg.seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NoisyResult { runs })
}
