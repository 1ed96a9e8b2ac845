use std::io::{self, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    BudgetExhausted,
    ToleranceMet,
    /// Vanishing subgradient at a point with `f > f⋆`.
    ZeroSubgradient,
    /// `f(x_k) ≤ f⋆` (Polyak) or a zero gradient (gradient descent).
    ConvergedExact,
}

/// One traced iterate. `step` is the length `‖x_{k+1} − x_k‖` before any
/// projection, zero on the last record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord<T> {
    pub k: usize,
    pub f: T,
    pub grad_norm: T,
    pub step: T,
    pub dist: Option<T>,
    pub x_norm: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace<T> {
    pub records: Vec<TraceRecord<T>>,
    pub status: Option<SolveStatus>,
    /// Loss plus (sub)gradient evaluations, including the final one.
    pub evals: usize,
    pub steps: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSummary {
    pub status: Option<SolveStatus>,
    pub evals: usize,
    pub steps: usize,
    pub final_value: Option<f64>,
    pub final_dist: Option<f64>,
    pub wall_time_secs: f64,
}

impl<T: Scalar> Default for SolveTrace<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> SolveTrace<T> {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            status: None,
            evals: 0,
            steps: 0,
            elapsed: Duration::ZERO,
        }
    }

    pub(crate) fn push_final(&mut self, record: TraceRecord<T>, status: SolveStatus) {
        // the last iterate is always kept, even when thinning
        if self.records.last().is_none_or(|r| r.k != record.k) {
            self.records.push(record);
        }
        self.status = Some(status);
    }

    /// Appends another run, shifting its `k` by `offset`.
    pub(crate) fn append(&mut self, other: &SolveTrace<T>, offset: usize) {
        self.records.extend(other.records.iter().map(|r| TraceRecord { k: r.k + offset, ..*r }));
        self.evals += other.evals;
        self.steps += other.steps;
    }

    pub fn last(&self) -> Option<&TraceRecord<T>> {
        self.records.last()
    }

    pub fn final_value(&self) -> Option<T> {
        self.last().map(|r| r.f)
    }

    pub fn final_dist(&self) -> Option<T> {
        self.last().and_then(|r| r.dist)
    }

    /// Smallest recorded distance to the truth.
    pub fn best_dist(&self) -> Option<T> {
        self.records
            .iter()
            .filter_map(|r| r.dist)
            .fold(None, |acc, d| Some(acc.map_or(d, |a: T| a.min(d))))
    }

    /// First recorded `k` whose distance is at most `level`.
    pub fn first_k_within(&self, level: T) -> Option<usize> {
        self.records.iter().find(|r| r.dist.is_some_and(|d| d <= level)).map(|r| r.k)
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            status: self.status,
            evals: self.evals,
            steps: self.steps,
            final_value: self.final_value().map(|v| v.as_f64()),
            final_dist: self.final_dist().map(|v| v.as_f64()),
            wall_time_secs: self.elapsed.as_secs_f64(),
        }
    }

    /// CSV with header `k,f,grad_norm,step,dist`; missing distances are empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,f,grad_norm,step,dist")?;
        for r in &self.records {
            let dist = r.dist.map(|d| format!("{:e}", d.as_f64())).unwrap_or_default();
            writeln!(
                w,
                "{},{:e},{:e},{:e},{}",
                r.k,
                r.f.as_f64(),
                r.grad_norm.as_f64(),
                r.step.as_f64(),
                dist
            )?;
        }
        Ok(())
    }
}
