//! Iterative recovery methods: Polyak-stepsize subgradient method and its
//! adaptive and unknown-optimum variants, plus the gradient-descent baseline.
//!
//! Every solver returns the final iterate together with a [`SolveTrace`].

mod trace;

pub use trace::{SolveStatus, SolveTrace, TraceRecord, TraceSummary};

use std::time::Instant;

use thiserror::Error;

use crate::analytics::GdSchedule;
use crate::loss::{LossError, LossKind, Objective};
use crate::scalar::{self, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("non-finite loss or iterate at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("condition estimate {kappa_hat} exceeded the cap {cap} without meeting the target")]
    KappaCapExceeded { kappa_hat: f64, cap: f64 },
}

/// Constraint set hook, applied after every step.
///
/// Takes `&mut self` so implementations can keep warm-start state.
pub trait Projection<T> {
    fn project(&mut self, x: &mut [T]);
}

impl<T, F: FnMut(&mut [T])> Projection<T> for F {
    fn project(&mut self, x: &mut [T]) {
        self(x)
    }
}

/// Optional early stop, checked before each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule<T> {
    /// `‖x_k − x⋆‖ ≤ tol`; needs ground truth.
    Distance(T),
    /// `f(x_k) − f⋆ ≤ tol`.
    Value(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<T> {
    pub eta: T,
    pub max_iters: usize,
    pub f_star: T,
    pub stop: Option<StopRule<T>>,
    pub trace_every: usize,
}

impl<T: Scalar> SolveOptions<T> {
    pub fn new(eta: T, max_iters: usize) -> Self {
        Self {
            eta,
            max_iters,
            f_star: T::zero(),
            stop: None,
            trace_every: 1,
        }
    }

    pub fn with_f_star(mut self, f_star: T) -> Self {
        self.f_star = f_star;
        self
    }

    pub fn with_stop(mut self, stop: StopRule<T>) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn with_trace_every(mut self, every: usize) -> Self {
        self.trace_every = every;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.eta > T::zero() && self.eta <= T::one()) {
            return Err(SolveError::InvalidOptions(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(SolveError::InvalidOptions("max_iters must be at least 1".into()));
        }
        if self.trace_every == 0 {
            return Err(SolveError::InvalidOptions("trace_every must be at least 1".into()));
        }
        if !self.f_star.is_finite() {
            return Err(SolveError::InvalidOptions("f_star must be finite".into()));
        }
        Ok(())
    }
}

fn all_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn check_stop<T: Scalar>(rule: Option<StopRule<T>>, gap: T, dist: Option<T>) -> bool {
    match rule {
        None => false,
        Some(StopRule::Value(tol)) => gap <= tol,
        Some(StopRule::Distance(tol)) => dist.is_some_and(|d| d <= tol),
    }
}

fn validate_stop<T: Scalar>(rule: Option<StopRule<T>>, obj: &Objective<'_, T>) -> Result<(), SolveError> {
    if matches!(rule, Some(StopRule::Distance(_))) && obj.truth().is_none() {
        return Err(SolveError::InvalidOptions(
            "a distance stop needs measurements that carry the ground truth".into(),
        ));
    }
    Ok(())
}

fn check_start<T: Scalar>(obj: &Objective<'_, T>, x0: &[T]) -> Result<(), SolveError> {
    if x0.len() != obj.dim() {
        return Err(LossError::Sensing(crate::sensing::SensingError::DimensionMismatch {
            expected: obj.dim(),
            got: x0.len(),
        })
        .into());
    }
    if !all_finite(x0) {
        return Err(SolveError::NonFinite { iteration: 0 });
    }
    Ok(())
}

/// Scaled Polyak subgradient method: `x ← x − η (f(x) − f⋆)/‖v‖² · v`.
///
/// Runs on whatever loss `obj` carries (normally ℓ1). The loop evaluates
/// `x_0, …, x_K` and takes at most `K = max_iters` steps. It ends early
/// when `f(x_k) ≤ f⋆` (converged-exact), when the subgradient vanishes,
/// or when the optional stop rule fires.
pub fn polyak_sgm<T: Scalar>(
    obj: &Objective<'_, T>,
    x0: &[T],
    opts: &SolveOptions<T>,
) -> Result<(Vec<T>, SolveTrace<T>), SolveError> {
    polyak_impl(obj, x0, opts, None)
}

/// [`polyak_sgm`] followed by a projection after every step.
pub fn polyak_sgm_projected<T: Scalar>(
    obj: &Objective<'_, T>,
    x0: &[T],
    opts: &SolveOptions<T>,
    projection: &mut dyn Projection<T>,
) -> Result<(Vec<T>, SolveTrace<T>), SolveError> {
    polyak_impl(obj, x0, opts, Some(projection))
}

fn polyak_impl<T: Scalar>(
    obj: &Objective<'_, T>,
    x0: &[T],
    opts: &SolveOptions<T>,
    mut projection: Option<&mut dyn Projection<T>>,
) -> Result<(Vec<T>, SolveTrace<T>), SolveError> {
    opts.validate()?;
    validate_stop(opts.stop, obj)?;
    check_start(obj, x0)?;
    let start = Instant::now();
    let truth = obj.truth();
    let mut x = x0.to_vec();
    let mut trace = SolveTrace::new();

    for k in 0..=opts.max_iters {
        let eval = obj.evaluate(&x)?;
        trace.evals += 1;
        if !eval.value.is_finite() || !all_finite(&eval.direction) {
            return Err(SolveError::NonFinite { iteration: k });
        }
        let f = eval.value;
        let gap = f - opts.f_star;
        let grad_norm = scalar::norm(&eval.direction);
        let dist = truth.map(|t| scalar::dist(&x, t));
        let x_norm = scalar::norm(&x);
        let mut record = TraceRecord {
            k,
            f,
            grad_norm,
            step: T::zero(),
            dist,
            x_norm,
        };

        let status = if gap <= T::zero() {
            Some(SolveStatus::ConvergedExact)
        } else if grad_norm == T::zero() {
            Some(SolveStatus::ZeroSubgradient)
        } else if check_stop(opts.stop, gap, dist) {
            Some(SolveStatus::ToleranceMet)
        } else if k == opts.max_iters {
            Some(SolveStatus::BudgetExhausted)
        } else {
            None
        };
        if let Some(status) = status {
            trace.push_final(record, status);
            break;
        }

        let coef = opts.eta * gap / (grad_norm * grad_norm);
        record.step = opts.eta * gap / grad_norm;
        if k % opts.trace_every == 0 {
            trace.records.push(record);
        }
        for (xi, vi) in x.iter_mut().zip(&eval.direction) {
            *xi -= coef * *vi;
        }
        if let Some(p) = projection.as_deref_mut() {
            p.project(&mut x);
        }
        trace.steps += 1;
        if !all_finite(&x) {
            return Err(SolveError::NonFinite { iteration: k + 1 });
        }
    }
    trace.elapsed = start.elapsed();
    Ok((x, trace))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    /// Largest condition estimate tried before giving up.
    pub kappa_cap: f64,
    /// Start each round from the previous round's output instead of `x0`.
    pub warm_start: bool,
    pub trace_every: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            kappa_cap: 1024.0,
            warm_start: false,
            trace_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRound<T> {
    pub kappa_hat: f64,
    pub budget: usize,
    pub evals: usize,
    pub final_value: T,
}

#[derive(Debug, Clone)]
pub struct AdaptiveOutcome<T> {
    pub x: Vec<T>,
    pub total_evals: usize,
    pub rounds: Vec<AdaptiveRound<T>>,
    /// Rounds concatenated; `k` counts evaluations from the start of the run.
    pub trace: SolveTrace<T>,
}

/// Iteration budget of one adaptive round with estimate `kappa_hat`:
/// `⌈7κ̂^{7/2}⌉ + ⌈2κ̂³ ln(κ̂/ε)⌉`.
pub fn adaptive_round_budget(kappa_hat: f64, eps: f64) -> Option<usize> {
    let t = (7.0 * kappa_hat.powf(3.5)).ceil() + (2.0 * kappa_hat.powi(3) * (kappa_hat / eps).ln()).ceil();
    if t.is_finite() && t >= 1.0 && t < usize::MAX as f64 / 4.0 {
        Some(t as usize)
    } else {
        None
    }
}

/// Polyak method with unknown conditioning: doubles an estimate `κ̂`
/// (starting from 1) and reruns with `η = 1/κ̂` and `f⋆ = 0` until
/// `f(x_i) ≤ ε f(x_0)`.
pub fn ad_polyak_sgm<T: Scalar>(
    obj: &Objective<'_, T>,
    x0: &[T],
    eps: T,
    opts: &AdaptiveOptions,
) -> Result<AdaptiveOutcome<T>, SolveError> {
    if !(eps > T::zero() && eps < T::one()) {
        return Err(SolveError::Precondition(format!("eps must lie in (0, 1), got {eps}")));
    }
    if opts.trace_every == 0 {
        return Err(SolveError::InvalidOptions("trace_every must be at least 1".into()));
    }
    check_start(obj, x0)?;
    let f0 = obj.value(x0)?;
    if !(f0 > T::zero()) {
        return Err(SolveError::Precondition(format!("f(x0) must be positive, got {f0}")));
    }
    let target = eps * f0;
    let start = Instant::now();
    let mut kappa_hat = 1.0_f64;
    let mut rounds = Vec::new();
    let mut total_evals = 0;
    let mut trace = SolveTrace::new();
    let mut origin = x0.to_vec();

    loop {
        if kappa_hat > opts.kappa_cap {
            return Err(SolveError::KappaCapExceeded {
                kappa_hat,
                cap: opts.kappa_cap,
            });
        }
        let budget = adaptive_round_budget(kappa_hat, eps.as_f64()).ok_or_else(|| {
            SolveError::InvalidOptions(format!("round budget overflows at kappa_hat = {kappa_hat}"))
        })?;
        let round_opts = SolveOptions::new(T::lit(1.0 / kappa_hat), budget).with_trace_every(opts.trace_every);
        let (x, round_trace) = polyak_sgm(obj, &origin, &round_opts)?;
        let final_value = round_trace.final_value().unwrap_or_else(T::nan);
        trace.append(&round_trace, total_evals);
        total_evals += round_trace.evals;
        rounds.push(AdaptiveRound {
            kappa_hat,
            budget,
            evals: round_trace.evals,
            final_value,
        });
        if final_value <= target {
            trace.status = Some(SolveStatus::ToleranceMet);
            trace.elapsed = start.elapsed();
            return Ok(AdaptiveOutcome {
                x,
                total_evals,
                rounds,
                trace,
            });
        }
        if opts.warm_start {
            origin = x;
        }
        kappa_hat *= 2.0;
    }
}

#[derive(Debug, Clone)]
pub struct NoOptOutcome<T> {
    pub x: Vec<T>,
    /// Outer round (0-based) whose output was returned.
    pub best_round: usize,
    /// `f̃_0, f̃_1, …, f̃_T`.
    pub estimates: Vec<T>,
    /// `f(x̂_t)` per outer round.
    pub round_values: Vec<T>,
    /// Inner runs concatenated; `k` counts evaluations from the start.
    pub trace: SolveTrace<T>,
}

/// Polyak method for an unknown optimal value.
///
/// Outer round `t` runs the Polyak method from `x0` with scaling `η/2` and
/// the current estimate `f̃_{t−1}` in place of `f⋆`, then sets
/// `f̃_t = (f(x̂_t) + f̃_{t−1})/2`. Returns the round output with the least `f`.
pub fn polyak_sgm_noopt<T: Scalar>(
    obj: &Objective<'_, T>,
    x0: &[T],
    f_lb: T,
    eta: T,
    t_inner: usize,
    t_outer: usize,
) -> Result<NoOptOutcome<T>, SolveError> {
    polyak_sgm_noopt_with(obj, x0, f_lb, eta, t_inner, t_outer, false, 1)
}

/// [`polyak_sgm_noopt`] with a warm-start toggle and trace thinning.
#[allow(clippy::too_many_arguments)]
pub fn polyak_sgm_noopt_with<T: Scalar>(
    obj: &Objective<'_, T>,
    x0: &[T],
    f_lb: T,
    eta: T,
    t_inner: usize,
    t_outer: usize,
    warm_start: bool,
    trace_every: usize,
) -> Result<NoOptOutcome<T>, SolveError> {
    if t_inner == 0 || t_outer == 0 {
        return Err(SolveError::InvalidOptions("t_inner and t_outer must be at least 1".into()));
    }
    check_start(obj, x0)?;
    let start = Instant::now();
    let mut estimate = f_lb;
    let mut estimates = vec![estimate];
    let mut round_values = Vec::with_capacity(t_outer);
    let mut trace = SolveTrace::new();
    let mut best: Option<(usize, T, Vec<T>)> = None;
    let mut origin = x0.to_vec();
    let half = T::lit(0.5);

    for t in 0..t_outer {
        let opts = SolveOptions::new(eta * half, t_inner)
            .with_f_star(estimate)
            .with_trace_every(trace_every);
        let (x_hat, inner) = polyak_sgm(obj, &origin, &opts)?;
        let f_hat = inner.final_value().unwrap_or_else(T::nan);
        trace.append(&inner, trace.evals);
        round_values.push(f_hat);
        estimate = half * (f_hat + estimate);
        estimates.push(estimate);
        if best.as_ref().is_none_or(|(_, fb, _)| f_hat < *fb) {
            best = Some((t, f_hat, x_hat.clone()));
        }
        if warm_start {
            origin = x_hat;
        }
    }
    let (best_round, _, x) = best.expect("at least one outer round");
    trace.status = Some(SolveStatus::BudgetExhausted);
    trace.elapsed = start.elapsed();
    Ok(NoOptOutcome {
        x,
        best_round,
        estimates,
        round_values,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdOptions<T> {
    pub schedule: GdSchedule<T>,
    pub max_iters: usize,
    pub stop: Option<StopRule<T>>,
    pub trace_every: usize,
}

impl<T: Scalar> GdOptions<T> {
    pub fn new(schedule: GdSchedule<T>, max_iters: usize) -> Self {
        Self {
            schedule,
            max_iters,
            stop: None,
            trace_every: 1,
        }
    }

    pub fn with_stop(mut self, stop: StopRule<T>) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn with_trace_every(mut self, every: usize) -> Self {
        self.trace_every = every;
        self
    }
}

/// Gradient descent on the squared loss: `x ← Π(x − η_k ∇𝓛(x))`.
///
/// The objective's data is reused with the squared loss regardless of the
/// kind it was built with. Trace values are `𝓛(x_k)`.
pub fn gradient_descent<T: Scalar>(
    obj: &Objective<'_, T>,
    x0: &[T],
    opts: &GdOptions<T>,
    mut projection: Option<&mut dyn Projection<T>>,
) -> Result<(Vec<T>, SolveTrace<T>), SolveError> {
    if opts.max_iters == 0 || opts.trace_every == 0 {
        return Err(SolveError::InvalidOptions(
            "max_iters and trace_every must be at least 1".into(),
        ));
    }
    let bad_step = |s: T| !(s.is_finite() && s > T::zero());
    if bad_step(opts.schedule.first) || bad_step(opts.schedule.rest) {
        return Err(SolveError::InvalidOptions("stepsizes must be finite and positive".into()));
    }
    let obj = obj.with_kind(LossKind::Squared);
    validate_stop(opts.stop, &obj)?;
    check_start(&obj, x0)?;
    let start = Instant::now();
    let truth = obj.truth();
    let mut x = x0.to_vec();
    let mut trace = SolveTrace::new();

    for k in 0..=opts.max_iters {
        let eval = obj.evaluate(&x)?;
        trace.evals += 1;
        if !eval.value.is_finite() || !all_finite(&eval.direction) {
            return Err(SolveError::NonFinite { iteration: k });
        }
        let grad_norm = scalar::norm(&eval.direction);
        let dist = truth.map(|t| scalar::dist(&x, t));
        let mut record = TraceRecord {
            k,
            f: eval.value,
            grad_norm,
            step: T::zero(),
            dist,
            x_norm: scalar::norm(&x),
        };
        let status = if grad_norm == T::zero() {
            Some(SolveStatus::ConvergedExact)
        } else if check_stop(opts.stop, eval.value, dist) {
            Some(SolveStatus::ToleranceMet)
        } else if k == opts.max_iters {
            Some(SolveStatus::BudgetExhausted)
        } else {
            None
        };
        if let Some(status) = status {
            trace.push_final(record, status);
            break;
        }
        let eta = opts.schedule.step(k);
        record.step = eta * grad_norm;
        if k % opts.trace_every == 0 {
            trace.records.push(record);
        }
        for (xi, gi) in x.iter_mut().zip(&eval.direction) {
            *xi -= eta * *gi;
        }
        if let Some(p) = projection.as_deref_mut() {
            p.project(&mut x);
        }
        trace.steps += 1;
        if !all_finite(&x) {
            return Err(SolveError::NonFinite { iteration: k + 1 });
        }
    }
    trace.elapsed = start.elapsed();
    Ok((x, trace))
}
