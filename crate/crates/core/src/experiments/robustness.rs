use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gd_grid_schedule, median, std_dev, write_csv_artifact, ExperimentError, Instance, Provenance};
use crate::rng::child_seed;
use crate::sensing::{EnsembleKind, NoiseModel};
use crate::solvers::{gradient_descent, polyak_sgm, GdOptions, SolveOptions, SolveStatus, StopRule, SolveTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub seed: u64,
    pub dim: usize,
    pub ratio: usize,
    pub signal_norm: f64,
    pub instances: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Polyak uses `η = 2^{-j}` for each listed `j`.
    pub polyak_grid: Vec<i32>,
    /// Gradient descent uses the constant step `2^j` after the first.
    pub gd_grid: Vec<i32>,
    pub ensemble: EnsembleKind,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl RobustnessConfig {
    pub fn desk() -> Self {
        Self {
            seed: 0,
            dim: 64,
            ratio: 4,
            signal_norm: 1.0,
            instances: 10,
            max_iters: 10_000,
            tol: 1e-5,
            polyak_grid: (0..=6).collect(),
            gd_grid: (-3..=3).collect(),
            ensemble: EnsembleKind::Gaussian,
        }
    }

    pub fn paper() -> Self {
        Self {
            dim: 256,
            ..Self::desk()
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.dim == 0 || self.ratio == 0 || self.instances == 0 || self.max_iters == 0 {
            return Err(ExperimentError::Config("robustness sizes must be positive".into()));
        }
        if self.polyak_grid.iter().any(|&j| j < 0) {
            return Err(ExperimentError::Config("Polyak needs η = 2^-j ≤ 1, so j ≥ 0".into()));
        }
        if self.polyak_grid.is_empty() || self.gd_grid.is_empty() || !(self.tol > 0.0) {
            return Err(ExperimentError::Config("empty stepsize grid or bad tolerance".into()));
        }
        Ok(())
    }
}

/// Iterations-to-tolerance over the instances for one `(method, stepsize)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub method: &'static str,
    pub exponent: i32,
    pub stepsize: f64,
    /// Capped runs are stored as `max_iters`.
    pub iterations: Vec<usize>,
    pub capped: Vec<bool>,
}

impl RobustnessRow {
    fn as_f64(&self) -> Vec<f64> {
        self.iterations.iter().map(|&k| k as f64).collect()
    }

    pub fn median(&self) -> f64 {
        median(&self.as_f64())
    }

    pub fn std(&self) -> f64 {
        std_dev(&self.as_f64())
    }

    pub fn capped_count(&self) -> usize {
        self.capped.iter().filter(|&&c| c).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessResult {
    pub rows: Vec<RobustnessRow>,
}

impl RobustnessResult {
    pub fn method_rows<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a RobustnessRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Average over the stepsize grid of the per-stepsize standard deviation.
    pub fn mean_std(&self, method: &str) -> f64 {
        let s: Vec<f64> = self.method_rows(method).map(RobustnessRow::std).collect();
        s.iter().sum::<f64>() / s.len() as f64
    }

    /// Standard deviation of all iteration counts of a method, pooled over
    /// the stepsize grid and the instances.
    pub fn pooled_std(&self, method: &str) -> f64 {
        let all: Vec<f64> = self.method_rows(method).flat_map(RobustnessRow::as_f64).collect();
        std_dev(&all)
    }

    pub fn write(&self, dir: &Path, prov: &Provenance) -> std::io::Result<()> {
        let mut table = Vec::new();
        let mut raw = Vec::new();
        for row in &self.rows {
            table.push(format!(
                "{},{},{:e},{},{},{}",
                row.method,
                row.exponent,
                row.stepsize,
                row.median(),
                row.std(),
                row.capped_count()
            ));
            for (i, (k, c)) in row.iterations.iter().zip(&row.capped).enumerate() {
                raw.push(format!("{},{},{},{},{}", row.method, row.exponent, i, k, u8::from(*c)));
            }
        }
        write_csv_artifact(
            dir,
            "robustness.csv",
            prov,
            "method,exponent,stepsize,median_iters,std_iters,capped",
            &table,
        )?;
        write_csv_artifact(dir, "robustness_runs.csv", prov, "method,exponent,instance,iters,capped", &raw)
    }
}

fn iterations(trace: &SolveTrace<f64>, max_iters: usize) -> (usize, bool) {
    match trace.status {
        Some(SolveStatus::ToleranceMet | SolveStatus::ConvergedExact) => (trace.steps, false),
        _ => (max_iters, true),
    }
}

fn instance_runs(cfg: &RobustnessConfig, seed: u64) -> Result<Vec<(usize, bool)>, ExperimentError> {
    let inst = Instance::new(
        cfg.ensemble,
        cfg.dim,
        cfg.ratio * cfg.dim,
        cfg.signal_norm,
        NoiseModel::Clean,
        seed,
    )?;
    let obj = inst.objective();
    let x0 = vec![0.0; cfg.dim];
    let stop = StopRule::Distance(cfg.tol);
    let mut out = Vec::new();
    for &j in &cfg.polyak_grid {
        let opts = SolveOptions::new(2f64.powi(-j), cfg.max_iters)
            .with_stop(stop)
            .with_trace_every(cfg.max_iters);
        out.push(match polyak_sgm(&obj, &x0, &opts) {
            Ok((_, t)) => iterations(&t, cfg.max_iters),
            Err(_) => (cfg.max_iters, true),
        });
    }
    for &j in &cfg.gd_grid {
        let opts = GdOptions::new(gd_grid_schedule(cfg.signal_norm, j), cfg.max_iters)
            .with_stop(stop)
            .with_trace_every(cfg.max_iters);
        out.push(match gradient_descent(&obj, &x0, &opts, None) {
            Ok((_, t)) => iterations(&t, cfg.max_iters),
            Err(_) => (cfg.max_iters, true),
        });
    }
    Ok(out)
}

/// Iterations each method needs to reach the distance tolerance, per
/// stepsize, across independent instances.
pub fn run_robustness(cfg: &RobustnessConfig) -> Result<RobustnessResult, ExperimentError> {
    cfg.validate()?;
    let per_instance = (0..cfg.instances)
        .into_par_iter()
        .map(|i| instance_runs(cfg, child_seed(cfg.seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = cfg
        .polyak_grid
        .iter()
        .map(|&j| ("polyak", j, 2f64.powi(-j)))
        .chain(cfg.gd_grid.iter().map(|&j| ("gd", j, 2f64.powi(j))));
    let rows = labels
        .enumerate()
        .map(|(col, (method, exponent, stepsize))| RobustnessRow {
            method,
            exponent,
            stepsize,
            iterations: per_instance.iter().map(|r| r[col].0).collect(),
            capped: per_instance.iter().map(|r| r[col].1).collect(),
        })
        .collect();
    Ok(RobustnessResult { rows })
}
