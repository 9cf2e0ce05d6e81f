//! Convergence traces and run summaries.
//!
//! Trace CSV schema: `iteration,epoch,rel_residual,elapsed_seconds`. Floats
//! are written in shortest round-trip form so identical runs produce
//! identical bytes (the elapsed column excepted, unless timing is off).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "iteration,epoch,rel_residual,elapsed_seconds";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub epoch: f64,
    pub rel_residual: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    EpochBudget,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub label: String,
    pub records: Vec<TraceRecord>,
    pub status: Status,
    /// Iterations whose inner solve stopped at its iteration cap.
    pub inner_cap_hits: u64,
}

impl ConvergenceTrace {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            records: Vec::new(),
            status: Status::EpochBudget,
            inner_cap_hits: 0,
        }
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_rel_residual(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.rel_residual)
    }

    pub fn iterations(&self) -> u64 {
        self.last().map_or(0, |r| r.iteration)
    }

    pub fn epochs(&self) -> f64 {
        self.last().map_or(0.0, |r| r.epoch)
    }

    /// Relative residual at the last checkpoint with `epoch <= at`.
    pub fn rel_residual_at_epoch(&self, at: f64) -> Option<f64> {
        self.records.iter().take_while(|r| r.epoch <= at).last().map(|r| r.rel_residual)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            writeln!(out, "{},{},{:e},{}", r.iteration, r.epoch, r.rel_residual, r.elapsed_seconds).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Parses a trace CSV (records only; label taken from the caller).
    pub fn read_csv(path: impl AsRef<Path>, label: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(TRACE_HEADER) {
            return Err(Error::parse(path, format!("missing header `{TRACE_HEADER}`")));
        }
        let mut trace = Self::new(label);
        for (k, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::parse(path, format!("malformed record on line {}", k + 2));
            if f.len() != 4 {
                return Err(bad());
            }
            trace.records.push(TraceRecord {
                iteration: f[0].parse().map_err(|_| bad())?,
                epoch: f[1].parse().map_err(|_| bad())?,
                rel_residual: f[2].parse().map_err(|_| bad())?,
                elapsed_seconds: f[3].parse().map_err(|_| bad())?,
            });
        }
        Ok(trace)
    }
}

/// Per-solver summary entry written to `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSummary {
    pub name: String,
    pub status: Status,
    pub iterations: u64,
    pub epochs: f64,
    pub final_rel_residual: f64,
    pub seed: u64,
    pub options: serde_json::Value,
    pub trace_path: String,
    pub residual_trace_path: String,
}

impl SolverSummary {
    pub fn from_trace(
        name: impl Into<String>,
        trace: &ConvergenceTrace,
        seed: u64,
        options: serde_json::Value,
        trace_path: impl Into<String>,
    ) -> Self {
        let trace_path = trace_path.into();
        Self {
            name: name.into(),
            status: trace.status,
            iterations: trace.iterations(),
            epochs: trace.epochs(),
            final_rel_residual: trace.final_rel_residual(),
            seed,
            options,
            residual_trace_path: trace_path.clone(),
            trace_path,
        }
    }
}
