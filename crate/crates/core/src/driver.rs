//! Shared outer loop: stopping rules, checkpoint cadence and trace recording.

use std::time::Instant;

use crate::error::Result;
use crate::trace::{ConvergenceTrace, Status, TraceRecord};

/// Relative improvement a checkpoint must achieve to reset the stall counter.
pub const STALL_IMPROVEMENT: f64 = 1e-3;

pub(crate) enum Advance {
    Continue { inner_cap_hit: bool },
    /// No admissible block remains (the residual matrix vanished).
    Exhausted,
}

pub(crate) trait Iteration {
    fn advance(&mut self) -> Result<Advance>;

    /// Cheap residual measure consulted after every iteration.
    fn residual_estimate(&self) -> f64;

    /// Residual reported at checkpoints (and used there for stopping);
    /// defaults to the cheap estimate.
    fn checkpoint_residual(&mut self) -> f64 {
        self.residual_estimate()
    }
}

pub(crate) struct LoopConfig {
    pub label: String,
    /// Epoch of iteration `k` is `k·block / n`.
    pub block: usize,
    pub n: usize,
    pub stop_tol: f64,
    pub max_epochs: f64,
    pub checkpoint_every: usize,
    pub stall_checkpoints: usize,
    pub record_time: bool,
}

impl LoopConfig {
    fn epoch(&self, iteration: u64) -> f64 {
        (iteration as f64 * self.block as f64) / self.n as f64
    }
}

pub(crate) fn run<M, F>(method: &mut M, cfg: &LoopConfig, mut observe: F) -> Result<ConvergenceTrace>
where
    M: Iteration,
    F: FnMut(&M, &TraceRecord),
{
    let clock = Instant::now();
    let mut trace = ConvergenceTrace::new(cfg.label.clone());
    let mut record = |method: &mut M, trace: &mut ConvergenceTrace, iteration: u64| -> f64 {
        let rel = method.checkpoint_residual();
        let rec = TraceRecord {
            iteration,
            epoch: cfg.epoch(iteration),
            rel_residual: rel,
            elapsed_seconds: if cfg.record_time { clock.elapsed().as_secs_f64() } else { 0.0 },
        };
        observe(method, &rec);
        trace.records.push(rec);
        rel
    };

    let mut iteration: u64 = 0;
    let rel0 = record(method, &mut trace, 0);
    if rel0 <= cfg.stop_tol {
        trace.status = Status::Converged;
        return Ok(trace);
    }
    let mut best = rel0;
    let mut since_best = 0usize;
    let cadence = cfg.checkpoint_every.max(1) as u64;

    loop {
        if cfg.epoch(iteration) >= cfg.max_epochs {
            trace.status = Status::EpochBudget;
            break;
        }
        match method.advance()? {
            Advance::Continue { inner_cap_hit } => {
                if inner_cap_hit {
                    trace.inner_cap_hits += 1;
                }
            }
            Advance::Exhausted => {
                if trace.last().map(|r| r.iteration) != Some(iteration) {
                    record(method, &mut trace, iteration);
                }
                trace.status = if trace.final_rel_residual() <= cfg.stop_tol {
                    Status::Converged
                } else {
                    Status::Stalled
                };
                return Ok(trace);
            }
        }
        iteration += 1;

        if method.residual_estimate() <= cfg.stop_tol {
            let rel = record(method, &mut trace, iteration);
            if rel <= cfg.stop_tol {
                trace.status = Status::Converged;
                return Ok(trace);
            }
            continue;
        }
        if iteration.is_multiple_of(cadence) {
            let rel = record(method, &mut trace, iteration);
            if rel <= cfg.stop_tol {
                trace.status = Status::Converged;
                return Ok(trace);
            }
            if rel < best * (1.0 - STALL_IMPROVEMENT) {
                best = rel;
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.stall_checkpoints > 0 && since_best >= cfg.stall_checkpoints {
                    trace.status = Status::Stalled;
                    return Ok(trace);
                }
            }
        }
    }
    if trace.last().map(|r| r.iteration) != Some(iteration) {
        record(method, &mut trace, iteration);
    }
    Ok(trace)
}
