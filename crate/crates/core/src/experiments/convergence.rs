use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gd_grid_best, opt, write_csv_artifact, ExperimentError, Instance, Provenance};
use crate::analytics::{gd_stepsize_schedule, kappa_bound};
use crate::rng::child_seed;
use crate::sensing::{EnsembleKind, NoiseModel};
use crate::solvers::{
    ad_polyak_sgm, gradient_descent, polyak_sgm, AdaptiveOptions, GdOptions, SolveOptions, SolveTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepsizeMode {
    /// Polyak with `η = 1`, gradient descent tuned over the grid.
    Optimized,
    /// Polyak with `η = 1/κ`, gradient descent with `c₀ = 1`, and `m = d‖x⋆‖⁴`.
    Theory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub seed: u64,
    pub mode: StepsizeMode,
    pub dim: usize,
    /// Oversampling ratios; ignored in theory mode.
    pub ratios: Vec<usize>,
    pub signal_norms: Vec<f64>,
    pub trials: usize,
    pub max_iters: usize,
    pub trace_every: usize,
    pub gd_grid: Vec<i32>,
    /// Also run the adaptive method with this target accuracy.
    pub adaptive_eps: Option<f64>,
    pub ensemble: EnsembleKind,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ConvergenceConfig {
    pub fn desk() -> Self {
        Self {
            seed: 0,
            mode: StepsizeMode::Optimized,
            dim: 64,
            ratios: vec![4, 8],
            signal_norms: vec![1.0],
            trials: 1,
            max_iters: 2000,
            trace_every: 10,
            gd_grid: (-3..=3).collect(),
            adaptive_eps: Some(1e-3),
            ensemble: EnsembleKind::Gaussian,
        }
    }

    pub fn desk_theory() -> Self {
        Self {
            mode: StepsizeMode::Theory,
            signal_norms: vec![1.0, 2.0, 4.0],
            max_iters: 10_000,
            trace_every: 50,
            adaptive_eps: None,
            ..Self::desk()
        }
    }

    pub fn paper() -> Self {
        Self {
            dim: 256,
            max_iters: 10_000,
            ..Self::desk()
        }
    }

    fn samples(&self, r: f64, ratio: usize) -> usize {
        match self.mode {
            StepsizeMode::Optimized => ratio * self.dim,
            StepsizeMode::Theory => (self.dim as f64 * r.powi(4)).ceil() as usize,
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.signal_norms.is_empty() || self.trials == 0 || self.dim == 0 || self.max_iters == 0 {
            return Err(ExperimentError::Config("convergence grids must be nonempty".into()));
        }
        if self.mode == StepsizeMode::Optimized && (self.ratios.is_empty() || self.gd_grid.is_empty()) {
            return Err(ExperimentError::Config("optimized mode needs ratios and a stepsize grid".into()));
        }
        if self.trace_every == 0 {
            return Err(ExperimentError::Config("trace_every must be positive".into()));
        }
        if let Some(eps) = self.adaptive_eps {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(ExperimentError::Config("adaptive_eps must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MethodTrace {
    pub method: &'static str,
    /// `η` for Polyak, the constant step for gradient descent, `ε` for the adaptive run.
    pub parameter: f64,
    pub trace: SolveTrace<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub signal_norm: f64,
    pub samples: usize,
    pub trial: usize,
    pub methods: Vec<MethodTrace>,
    pub adaptive_rounds: Option<usize>,
}

impl ConvergenceRun {
    pub fn method(&self, name: &str) -> Option<&MethodTrace> {
        self.methods.iter().find(|m| m.method == name)
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub runs: Vec<ConvergenceRun>,
}

impl ConvergenceResult {
    pub fn write(&self, dir: &Path, prov: &Provenance) -> std::io::Result<()> {
        let mut summary = Vec::new();
        for run in &self.runs {
            let mut lines = Vec::new();
            for m in &run.methods {
                for r in &m.trace.records {
                    lines.push(format!(
                        "{},{},{:e},{:e},{:e},{}",
                        m.method,
                        r.k,
                        r.f,
                        r.grad_norm,
                        r.step,
                        opt(r.dist)
                    ));
                }
                summary.push(format!(
                    "{},{},{},{},{:e},{},{},{}",
                    run.signal_norm,
                    run.samples,
                    run.trial,
                    m.method,
                    m.parameter,
                    opt(m.trace.final_dist()),
                    m.trace.evals,
                    run.adaptive_rounds.filter(|_| m.method == "adaptive").map_or(String::new(), |n| n.to_string())
                ));
            }
            let name = format!("convergence_r{}_m{}_t{}.csv", run.signal_norm, run.samples, run.trial);
            write_csv_artifact(dir, &name, prov, "method,k,f,grad_norm,step,dist", &lines)?;
        }
        write_csv_artifact(
            dir,
            "convergence_summary.csv",
            prov,
            "signal_norm,samples,trial,method,parameter,final_dist,evals,rounds",
            &summary,
        )
    }
}

fn one_run(
    cfg: &ConvergenceConfig,
    r: f64,
    samples: usize,
    trial: usize,
    seed: u64,
) -> Result<ConvergenceRun, ExperimentError> {
    let inst = Instance::new(cfg.ensemble, cfg.dim, samples, r, NoiseModel::Clean, seed)?;
    let obj = inst.objective();
    let x0 = vec![0.0; cfg.dim];
    let numerical = |e: crate::solvers::SolveError| ExperimentError::Numerical(e.to_string());
    let mut methods = Vec::new();

    let eta = match cfg.mode {
        StepsizeMode::Optimized => 1.0,
        StepsizeMode::Theory => 1.0 / kappa_bound(r),
    };
    let opts = SolveOptions::new(eta, cfg.max_iters).with_trace_every(cfg.trace_every);
    let (_, trace) = polyak_sgm(&obj, &x0, &opts).map_err(numerical)?;
    methods.push(MethodTrace {
        method: "polyak",
        parameter: eta,
        trace,
    });

    match cfg.mode {
        StepsizeMode::Optimized => {
            let (j, _, trace) = gd_grid_best(&obj, &x0, r, &cfg.gd_grid, cfg.max_iters, None, cfg.trace_every)
                .ok_or_else(|| ExperimentError::Numerical("every gradient-descent stepsize diverged".into()))?;
            methods.push(MethodTrace {
                method: "gd",
                parameter: 2f64.powi(j),
                trace,
            });
        }
        StepsizeMode::Theory => {
            let schedule = gd_stepsize_schedule(r, 1.0);
            let gd = GdOptions::new(schedule, cfg.max_iters).with_trace_every(cfg.trace_every);
            let (_, trace) = gradient_descent(&obj, &x0, &gd, None).map_err(numerical)?;
            methods.push(MethodTrace {
                method: "gd",
                parameter: schedule.rest,
                trace,
            });
        }
    }

    let mut adaptive_rounds = None;
    if let Some(eps) = cfg.adaptive_eps {
        let opts = AdaptiveOptions {
            trace_every: cfg.trace_every,
            ..AdaptiveOptions::default()
        };
        let out = ad_polyak_sgm(&obj, &x0, eps, &opts).map_err(numerical)?;
        adaptive_rounds = Some(out.rounds.len());
        methods.push(MethodTrace {
            method: "adaptive",
            parameter: eps,
            trace: out.trace,
        });
    }

    Ok(ConvergenceRun {
        signal_norm: r,
        samples,
        trial,
        methods,
        adaptive_rounds,
    })
}

/// Distance traces of Polyak, gradient descent and (optionally) the
/// adaptive method on the same instances.
pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceResult, ExperimentError> {
    cfg.validate()?;
    let ratios: Vec<usize> = match cfg.mode {
        StepsizeMode::Optimized => cfg.ratios.clone(),
        StepsizeMode::Theory => vec![0],
    };
    let mut tasks = Vec::new();
    for &r in &cfg.signal_norms {
        for &q in &ratios {
            for t in 0..cfg.trials {
                tasks.push((r, cfg.samples(r, q), t));
            }
        }
    }
    let runs = tasks
        .par_iter()
        .enumerate()
        .map(|(i, &(r, m, t))| one_run(cfg, r, m, t, child_seed(cfg.seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConvergenceResult { runs })
}
