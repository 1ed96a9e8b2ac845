//! `ctsgm`: runs the recovery experiments and writes CSV/JSON/PGM artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctsgm::experiments::{
    run_convergence, run_ct_reconstruction, run_noisy, run_phase_transition, run_robustness, ConvergenceConfig,
    CtConfig, ExperimentConfig, ExperimentError, NoisyConfig, PhaseTransitionConfig, Provenance, RobustnessConfig,
};

#[derive(Parser)]
#[command(name = "ctsgm", version, about = "Polyak subgradient recovery experiments")]
struct Cli {
    #[command(subcommand)]
    experiment: Experiment,

    /// JSON config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Start from the full-size preset instead of the desk-scale one.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Experiment {
    /// Success probability over a grid of signal norms and oversampling ratios.
    PhaseTransition,
    /// Distance traces of Polyak, gradient descent and the adaptive variant.
    Convergence,
    /// Iterations to tolerance across a stepsize grid.
    Robustness,
    /// Unknown-optimum Polyak against gradient descent under count noise.
    Noisy,
    /// TV-constrained phantom reconstruction.
    Ct,
}

impl Experiment {
    fn kind(self) -> &'static str {
        match self {
            Self::PhaseTransition => "phase-transition",
            Self::Convergence => "convergence",
            Self::Robustness => "robustness",
            Self::Noisy => "noisy",
            Self::Ct => "ct",
        }
    }

    fn preset(self, paper: bool) -> ExperimentConfig {
        match (self, paper) {
            (Self::PhaseTransition, false) => ExperimentConfig::PhaseTransition(PhaseTransitionConfig::desk()),
            (Self::PhaseTransition, true) => ExperimentConfig::PhaseTransition(PhaseTransitionConfig::paper()),
            (Self::Convergence, false) => ExperimentConfig::Convergence(ConvergenceConfig::desk()),
            (Self::Convergence, true) => ExperimentConfig::Convergence(ConvergenceConfig::paper()),
            (Self::Robustness, false) => ExperimentConfig::Robustness(RobustnessConfig::desk()),
            (Self::Robustness, true) => ExperimentConfig::Robustness(RobustnessConfig::paper()),
            (Self::Noisy, false) => ExperimentConfig::Noisy(NoisyConfig::desk()),
            (Self::Noisy, true) => ExperimentConfig::Noisy(NoisyConfig::paper()),
            (Self::Ct, false) => ExperimentConfig::Ct(CtConfig::desk()),
            (Self::Ct, true) => ExperimentConfig::Ct(CtConfig::paper()),
        }
    }
}

enum Failure {
    Config(String),
    Numerical(String),
    Io(anyhow::Error),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(m) => Self::Config(m),
            ExperimentError::Numerical(m) => Self::Numerical(m),
            ExperimentError::Io(e) => Self::Io(e.into()),
        }
    }
}

fn io_err<E: Into<anyhow::Error>>(what: String) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Io(e.into().context(what))
}

/// Reads a config file. The `kind` key may be omitted; if present it must
/// name the chosen subcommand.
fn load_config(path: &Path, experiment: Experiment) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Failure::Config("config must be a JSON object".into()))?;
    match obj.get("kind").and_then(|k| k.as_str()) {
        Some(k) if k != experiment.kind() => {
            return Err(Failure::Config(format!(
                "config is for `{k}` but the subcommand is `{}`",
                experiment.kind()
            )))
        }
        _ => {
            obj.insert("kind".into(), experiment.kind().into());
        }
    }
    ExperimentConfig::from_json(&value.to_string()).map_err(Failure::from)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => load_config(path, cli.experiment)?,
        None => cli.experiment.preset(cli.paper_scale),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    let prov = Provenance::of(&cfg);
    let out = cli.out.as_path();
    fs::create_dir_all(out).map_err(io_err(format!("creating {}", out.display())))?;
    fs::write(out.join("config.json"), cfg.to_json() + "\n").map_err(io_err("writing config.json".into()))?;
    eprintln!("{} {}", cfg.name(), prov.header_line());

    let written = |r: std::io::Result<()>| r.map_err(io_err(format!("writing artifacts to {}", out.display())));
    match &cfg {
        ExperimentConfig::PhaseTransition(c) => {
            let res = run_phase_transition(c)?;
            written(res.write(out, &prov))?;
            for cell in &res.cells {
                println!(
                    "r={:<4} m/d={:<3} polyak={:.2} gd={:.2}",
                    cell.signal_norm,
                    cell.ratio,
                    cell.polyak_rate(),
                    cell.gd_rate()
                );
            }
        }
        ExperimentConfig::Convergence(c) => {
            let res = run_convergence(c)?;
            written(res.write(out, &prov))?;
            for run in &res.runs {
                for m in &run.methods {
                    println!(
                        "r={} m={} trial={} {:<8} param={:.3e} final_dist={:.3e} evals={}",
                        run.signal_norm,
                        run.samples,
                        run.trial,
                        m.method,
                        m.parameter,
                        m.trace.final_dist().unwrap_or(f64::NAN),
                        m.trace.evals
                    );
                }
            }
        }
        ExperimentConfig::Robustness(c) => {
            let res = run_robustness(c)?;
            written(res.write(out, &prov))?;
            for row in &res.rows {
                println!(
                    "{:<6} step={:<9.4} median={:<8} std={:<10.1} capped={}",
                    row.method,
                    row.stepsize,
                    row.median(),
                    row.std(),
                    row.capped_count()
                );
            }
        }
        ExperimentConfig::Noisy(c) => {
            let res = run_noisy(c)?;
            written(res.write(out, &prov))?;
            println!(
                "median evals to 2x final distance: noopt={} gd={}",
                res.median_noopt_evals(),
                res.median_gd_evals()
            );
        }
        ExperimentConfig::Ct(c) => {
            let res = run_ct_reconstruction(c)?;
            written(res.write(out, &prov, c.write_images))?;
            for run in &res.runs {
                println!(
                    "scan={} polyak_psnr={:.3} gd_psnr={:.3} gd_step=2^{}",
                    run.scan,
                    run.final_psnr("polyak").unwrap_or(f64::NAN),
                    run.final_psnr("gd").unwrap_or(f64::NAN),
                    run.gd_exponent
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
