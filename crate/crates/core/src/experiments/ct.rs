use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_csv_artifact, write_json_artifact, ExperimentError, Provenance};
use crate::analytics::GdSchedule;
use crate::imaging::{psnr, shepp_logan, write_pgm16, RadonGeometry};
use crate::loss::Objective;
use crate::rng::{self, child_seed, Domain};
use crate::sensing::{generate_measurements, NoiseModel, SensingEnsemble};
use crate::solvers::{gradient_descent, polyak_sgm_projected, GdOptions, SolveOptions};
use crate::tv::{tv_norm, DrOptions, ImageVec, LinearSolver, TvBallProjector};

/// Gradient-descent snapshots and unconverged projection count.
type GdRun = (Vec<CtSnapshot>, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CtConfig {
    pub seed: u64,
    pub side: usize,
    pub angles: usize,
    /// Defaults to `⌈√2 · side⌉`, about one detector per pixel width.
    pub detectors: Option<usize>,
    /// Radius factor and final value of the enlarged central disc.
    pub disc_factor: f64,
    pub disc_value: f64,
    /// Pixel values are divided by this.
    pub intensity_scale: f64,
    /// TV radius; defaults to the TV of the phantom.
    pub lambda: Option<f64>,
    pub iterations: usize,
    /// Iteration counts at which images are kept (the last must equal `iterations`).
    pub checkpoints: Vec<usize>,
    /// Independent scans; each draws its own angle offset.
    pub scans: usize,
    pub polyak_eta: f64,
    /// Projected gradient descent uses the constant step `2^j`, tuned on the first scan.
    pub gd_grid: Vec<i32>,
    pub dr_tol: f64,
    pub dr_max_sweeps: usize,
    pub write_images: bool,
}

impl Default for CtConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl CtConfig {
    pub fn desk() -> Self {
        Self {
            seed: 0,
            side: 64,
            angles: 30,
            detectors: None,
            disc_factor: 2.0,
            disc_value: 1.0,
            intensity_scale: 1.0,
            lambda: None,
            iterations: 2000,
            checkpoints: vec![200, 1000, 2000],
            scans: 5,
            polyak_eta: 1.0,
            gd_grid: (-3..=3).collect(),
            dr_tol: 1e-4,
            dr_max_sweeps: 100,
            write_images: true,
        }
    }

    pub fn paper() -> Self {
        Self {
            side: 128,
            angles: 60,
            iterations: 10_000,
            checkpoints: vec![1000, 5000, 10_000],
            scans: 1,
            ..Self::desk()
        }
    }

    fn detectors(&self) -> usize {
        self.detectors
            .unwrap_or((std::f64::consts::SQRT_2 * self.side as f64).ceil() as usize)
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.side < 16 || self.angles == 0 || self.scans == 0 || self.iterations == 0 {
            return Err(ExperimentError::Config("need side ≥ 16 and positive angle/scan/iteration counts".into()));
        }
        let sorted = self.checkpoints.windows(2).all(|w| w[0] < w[1]);
        if self.checkpoints.is_empty() || !sorted || self.checkpoints.last() != Some(&self.iterations) || self.checkpoints[0] == 0 {
            return Err(ExperimentError::Config(
                "checkpoints must increase strictly and end at `iterations`".into(),
            ));
        }
        if !(self.polyak_eta > 0.0 && self.polyak_eta <= 1.0) || self.gd_grid.is_empty() {
            return Err(ExperimentError::Config("bad stepsize settings".into()));
        }
        if self.lambda.is_some_and(|l| !(l > 0.0)) || !(self.dr_tol > 0.0) || self.dr_max_sweeps == 0 {
            return Err(ExperimentError::Config("bad TV projection settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtSnapshot {
    pub method: &'static str,
    pub iteration: usize,
    pub image: ImageVec<f64>,
    pub psnr: f64,
    pub tv: f64,
}

#[derive(Debug, Clone)]
pub struct CtRun {
    pub scan: usize,
    pub angle_offset: f64,
    pub gd_exponent: i32,
    pub snapshots: Vec<CtSnapshot>,
    /// Projections that hit the sweep cap (their output is still feasible).
    pub unconverged_projections: usize,
}

impl CtRun {
    pub fn final_psnr(&self, method: &str) -> Option<f64> {
        self.snapshots
            .iter()
            .filter(|s| s.method == method)
            .max_by_key(|s| s.iteration)
            .map(|s| s.psnr)
    }
}

#[derive(Debug, Clone)]
pub struct CtResult {
    pub truth: ImageVec<f64>,
    pub lambda: f64,
    pub runs: Vec<CtRun>,
}

#[derive(Serialize)]
struct CtSummary {
    side: usize,
    lambda: f64,
    runs: Vec<CtSummaryRow>,
}

#[derive(Serialize)]
struct CtSummaryRow {
    scan: usize,
    angle_offset: f64,
    gd_step: f64,
    polyak_final_psnr: Option<f64>,
    gd_final_psnr: Option<f64>,
    unconverged_projections: usize,
}

impl CtResult {
    pub fn write(&self, dir: &Path, prov: &Provenance, images: bool) -> std::io::Result<()> {
        let mut lines = Vec::new();
        for run in &self.runs {
            for s in &run.snapshots {
                lines.push(format!("{},{},{},{:.6},{:e}", run.scan, s.method, s.iteration, s.psnr, s.tv));
            }
        }
        write_csv_artifact(dir, "ct_psnr.csv", prov, "scan,method,iteration,psnr,tv", &lines)?;
        let summary = CtSummary {
            side: self.truth.side(),
            lambda: self.lambda,
            runs: self
                .runs
                .iter()
                .map(|r| CtSummaryRow {
                    scan: r.scan,
                    angle_offset: r.angle_offset,
                    gd_step: 2f64.powi(r.gd_exponent),
                    polyak_final_psnr: r.final_psnr("polyak"),
                    gd_final_psnr: r.final_psnr("gd"),
                    unconverged_projections: r.unconverged_projections,
                })
                .collect(),
        };
        write_json_artifact(dir, "ct_summary.json", prov, &summary)?;
        if images {
            let peak = self.truth.as_slice().iter().cloned().fold(0.0, f64::max);
            let pgm = |name: String, img: &ImageVec<f64>| -> std::io::Result<()> {
                write_pgm16(img, peak, BufWriter::new(fs::File::create(dir.join(name))?))
            };
            pgm("ct_truth.pgm".into(), &self.truth)?;
            for run in &self.runs {
                for s in &run.snapshots {
                    pgm(format!("ct_{}_scan{}_k{}.pgm", s.method, run.scan, s.iteration), &s.image)?;
                }
            }
        }
        Ok(())
    }
}

struct Scan {
    ensemble: SensingEnsemble<f64>,
    measurements: crate::sensing::MeasurementSet<f64>,
    offset: f64,
}

fn make_scan(cfg: &CtConfig, truth: &ImageVec<f64>, scan: usize) -> Result<Scan, ExperimentError> {
    let seed = child_seed(cfg.seed, scan as u64);
    let step = std::f64::consts::PI / cfg.angles as f64;
    let offset = rng::substream(seed, Domain::Experiment, 0).gen_range(0.0..step);
    let geo = RadonGeometry::with_angle_offset(cfg.side, cfg.angles, cfg.detectors(), offset)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let ensemble = geo.ensemble();
    let measurements = generate_measurements(&ensemble, truth.as_slice(), NoiseModel::Clean, seed)
        .map_err(|e| ExperimentError::Numerical(e.to_string()))?;
    Ok(Scan {
        ensemble,
        measurements,
        offset,
    })
}

/// Runs one projected method, stopping at each checkpoint to take a snapshot.
/// Both methods are memoryless apart from the projector's warm start, so
/// resuming from the last iterate continues the same run.
fn trajectory(
    cfg: &CtConfig,
    obj: &Objective<'_, f64>,
    truth: &ImageVec<f64>,
    lambda: f64,
    method: &'static str,
    gd_step: f64,
) -> Result<(Vec<CtSnapshot>, usize), ExperimentError> {
    let n = cfg.side;
    let dr = DrOptions {
        tol: cfg.dr_tol,
        max_sweeps: cfg.dr_max_sweeps,
        solver: LinearSolver::Spectral,
        ..DrOptions::default()
    };
    let mut proj = TvBallProjector::new(n, lambda, dr).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let numerical = |e: crate::solvers::SolveError| ExperimentError::Numerical(e.to_string());
    let mut x = vec![0.0; n * n];
    let mut done = 0;
    let mut snaps = Vec::new();
    for &k in &cfg.checkpoints {
        let segment = k - done;
        x = match method {
            "polyak" => {
                let opts = SolveOptions::new(cfg.polyak_eta, segment).with_trace_every(segment);
                polyak_sgm_projected(obj, &x, &opts, &mut proj).map_err(numerical)?.0
            }
            _ => {
                let opts = GdOptions::new(GdSchedule::constant(gd_step), segment).with_trace_every(segment);
                gradient_descent(obj, &x, &opts, Some(&mut proj)).map_err(numerical)?.0
            }
        };
        done = k;
        let image = ImageVec::new(x.clone(), n).expect("side matches");
        let quality = psnr(&image, truth).map_err(|e| ExperimentError::Numerical(e.to_string()))?;
        snaps.push(CtSnapshot {
            method,
            iteration: k,
            tv: tv_norm(&image),
            psnr: quality,
            image,
        });
    }
    Ok((snaps, proj.unconverged))
}

/// TV-constrained reconstruction of the phantom from simulated scans with
/// projected Polyak steps and projected gradient descent.
pub fn run_ct_reconstruction(cfg: &CtConfig) -> Result<CtResult, ExperimentError> {
    cfg.validate()?;
    let truth: ImageVec<f64> = shepp_logan(cfg.side, cfg.disc_factor, cfg.disc_value, cfg.intensity_scale)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let lambda = cfg.lambda.unwrap_or_else(|| tv_norm(&truth));

    // stepsize for gradient descent: best final PSNR on the first scan
    let first = make_scan(cfg, &truth, 0)?;
    let first_obj = Objective::l1(&first.ensemble, &first.measurements).expect("sizes agree");
    let tuned = cfg
        .gd_grid
        .par_iter()
        .map(|&j| trajectory(cfg, &first_obj, &truth, lambda, "gd", 2f64.powi(j)).map(|t| (j, t)))
        .collect::<Result<Vec<_>, _>>()?;
    let (gd_exponent, first_gd) = tuned
        .into_iter()
        .filter(|(_, (s, _))| s.last().is_some_and(|s| !s.psnr.is_nan()))
        .max_by(|a, b| {
            let pa = a.1 .0.last().map_or(f64::NEG_INFINITY, |s| s.psnr);
            let pb = b.1 .0.last().map_or(f64::NEG_INFINITY, |s| s.psnr);
            pa.total_cmp(&pb)
        })
        .ok_or_else(|| ExperimentError::Numerical("no gradient-descent stepsize produced a finite image".into()))?;
    let gd_step = 2f64.powi(gd_exponent);

    let mut first_gd = Some(first_gd);
    let mut first = Some(first);
    let scans: Vec<(usize, Option<Scan>, Option<GdRun>)> = (0..cfg.scans)
        .map(|s| (s, if s == 0 { first.take() } else { None }, if s == 0 { first_gd.take() } else { None }))
        .collect();
    let runs = scans
        .into_par_iter()
        .map(|(s, scan, gd)| {
            let scan = match scan {
                Some(sc) => sc,
                None => make_scan(cfg, &truth, s)?,
            };
            let obj = Objective::l1(&scan.ensemble, &scan.measurements).expect("sizes agree");
            let (mut snapshots, mut unconverged) = trajectory(cfg, &obj, &truth, lambda, "polyak", gd_step)?;
            let (gd_snaps, gd_unconverged) = match gd {
                Some(g) => g,
                None => trajectory(cfg, &obj, &truth, lambda, "gd", gd_step)?,
            };
            snapshots.extend(gd_snaps);
            unconverged += gd_unconverged;
            Ok(CtRun {
                scan: s,
                angle_offset: scan.offset,
                gd_exponent,
                snapshots,
                unconverged_projections: unconverged,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(CtResult { truth, lambda, runs })
}
