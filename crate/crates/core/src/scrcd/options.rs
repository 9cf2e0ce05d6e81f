use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// How the coordinate block `J` is drawn from the sampling weights `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// `ℓ` i.i.d. draws from `p`, duplicates removed.
    DiagIid,
    /// Sequential weighted sampling without replacement.
    #[default]
    DiagNoReplace,
    /// Uniform over the support of `p`, without replacement.
    Uniform,
}

/// Solver for the `ℓ × ℓ` block system.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnerMode {
    /// Min-norm solution through a symmetric eigendecomposition.
    #[default]
    Direct,
    /// Jacobi-preconditioned CG to relative tolerance `rel_tol`, capped at `ℓ` iterations.
    Pcg { rel_tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    pub block_size: usize,
    #[serde(default)]
    pub sampling: SamplingMode,
    #[serde(default)]
    pub inner: InnerMode,
    /// Target for `‖r‖₂/‖b‖₂`.
    pub stop_tol: f64,
    pub max_epochs: f64,
    /// Iterations between trace records; `None` picks `max(1, ⌊n/(10ℓ)⌋)`.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// Checkpoints without a `1e-3` relative improvement before giving up;
    /// zero disables stall detection.
    pub stall_checkpoints: usize,
    pub seed: u64,
    /// When false the elapsed column of the trace is zero, making trace
    /// bytes a pure function of the inputs.
    pub record_time: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            block_size: 1,
            sampling: SamplingMode::default(),
            inner: InnerMode::default(),
            stop_tol: 1e-8,
            max_epochs: 100.0,
            checkpoint_every: None,
            stall_checkpoints: 50,
            seed: 0,
            record_time: true,
            execution: Execution::default(),
        }
    }
}

impl SolveOptions {
    pub fn with_block_size(block_size: usize) -> Self {
        Self { block_size, ..Self::default() }
    }

    pub fn checkpoint_cadence(&self, n: usize) -> usize {
        self.checkpoint_every
            .unwrap_or_else(|| (n / (10 * self.block_size.max(1))).max(1))
            .max(1)
    }

    /// Checks the options against a system of size `n` with `d` pivots.
    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::InvalidParameter("block_size must be at least 1".into()));
        }
        if self.block_size > n.saturating_sub(d) {
            return Err(Error::InvalidParameter(format!(
                "block_size {} exceeds n - d = {}",
                self.block_size,
                n.saturating_sub(d)
            )));
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::InvalidParameter("stop_tol must be positive".into()));
        }
        if !(self.max_epochs > 0.0) {
            return Err(Error::InvalidParameter("max_epochs must be positive".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::InvalidParameter("checkpoint_every must be at least 1".into()));
        }
        if let InnerMode::Pcg { rel_tol } = self.inner {
            if !(rel_tol > 0.0 && rel_tol < 1.0) {
                return Err(Error::InvalidParameter(format!("inner rel_tol {rel_tol} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}
