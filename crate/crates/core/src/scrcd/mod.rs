//! Subspace-constrained randomized coordinate descent.
//!
//! Given a Nyström approximation `A⟨S⟩ = F·Fᵀ`, the iterate is first made to
//! satisfy the pivot equations `A[S, :]·x = b[S]`; every subsequent step
//! solves a block of the residual system `A° = A − F·Fᵀ` on coordinates
//! `J ∉ S` and corrects `x[S]` so the pivot equations keep holding.

mod inner;
mod options;
mod sampling;

pub use inner::{inner_solve, InnerSolution};
pub use options::{InnerMode, SamplingMode, SolveOptions};
pub use sampling::{sample_block, BlockSampler};

use nalgebra::{DMatrix, DVector};

use crate::dense::{cols, rows};
use crate::driver::{self, Advance, Iteration, LoopConfig};
use crate::error::{Error, Result};
use crate::matrix::{back_substitution, forward_substitution, MatrixSource};
use crate::nystrom::{residual_block_from_columns, NystromApproximation};
use crate::rng::{substream, SolverRng, STREAM_SOLVER};
use crate::trace::{ConvergenceTrace, TraceRecord};

/// Iterate, maintained residual and auxiliary data of an SC-RCD run.
#[derive(Debug, Clone)]
pub struct SolverState {
    x: DVector<f64>,
    r: DVector<f64>,
    c: DMatrix<f64>,
    p: DVector<f64>,
    pivots: Vec<usize>,
    iteration: u64,
    epochs: f64,
}

/// Outcome of one [`SolverState::step`].
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub alpha: DVector<f64>,
    pub inner_iterations: usize,
    pub inner_cap_hit: bool,
}

impl SolverState {
    /// Sets up `x⁰` with `A[S, :]·x⁰ = b[S]`, its residual, `C = F[S, :]⁻ᵀ·Fᵀ`
    /// and the sampling weights `p ∝ diag(A°)`.
    pub fn init<S: MatrixSource + ?Sized>(src: &S, approx: &NystromApproximation, b: &DVector<f64>) -> Result<Self> {
        Self::init_from(src, approx, b, DVector::zeros(b.len()))
    }

    /// Like [`SolverState::init`] but starts from `x0`, changing only its
    /// pivot entries so that the pivot equations hold.
    pub fn init_from<S: MatrixSource + ?Sized>(
        src: &S,
        approx: &NystromApproximation,
        b: &DVector<f64>,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let n = src.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch { what: "right-hand side", expected: n, got: b.len() });
        }
        if x0.len() != n {
            return Err(Error::DimensionMismatch { what: "starting point", expected: n, got: x0.len() });
        }
        if approx.dim() != n {
            return Err(Error::DimensionMismatch { what: "Nyström factor rows", expected: n, got: approx.dim() });
        }
        let pivots = approx.pivots().to_vec();
        let d = pivots.len();
        let f_s = approx.pivot_factor();
        let u = f_s.transpose();

        let mut x = x0;
        let mut r = if x.iter().all(|&v| v == 0.0) { -b } else { src.matvec(&x) - b };
        let r_s = DVector::from_iterator(d, pivots.iter().map(|&s| r[s]));
        let beta = back_substitution(&u, &forward_substitution(&f_s, &r_s)?)?;
        for (&s, &v) in pivots.iter().zip(beta.iter()) {
            x[s] -= v;
        }
        r -= src.columns(&pivots) * &beta;

        // Every diagonal entry of U was exercised by the β solve above, so
        // the per-column solves cannot fail.
        let mut c = approx.factor().transpose();
        for j in 0..n {
            let col = &mut c.as_mut_slice()[j * d..(j + 1) * d];
            u.solve_in_place(col).expect("pivot factor diagonal already checked");
        }

        let total = approx.residual_trace();
        let mut p = approx.residual_diag().clone();
        for &s in &pivots {
            p[s] = 0.0;
        }
        if total > 0.0 {
            p /= total;
        } else {
            p.fill(0.0);
        }
        Ok(Self { x, r, c, p, pivots, iteration: 0, epochs: 0.0 })
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    /// Maintained residual `r = A·x − b`.
    pub fn residual(&self) -> &DVector<f64> {
        &self.r
    }

    /// `C = F[S, :]⁻ᵀ·Fᵀ`, rows in pivot order.
    pub fn auxiliary(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn epochs(&self) -> f64 {
        self.epochs
    }

    /// One SC-RCD update on the block `idx` (disjoint from the pivots).
    pub fn step<S: MatrixSource + ?Sized>(
        &mut self,
        src: &S,
        approx: &NystromApproximation,
        idx: &[usize],
        options: &SolveOptions,
    ) -> Result<StepInfo> {
        let a_j = src.columns(idx);
        let m = residual_block_from_columns(approx, &a_j, idx);
        let r_j = DVector::from_iterator(idx.len(), idx.iter().map(|&j| self.r[j]));
        let sol = inner_solve(&m, &r_j, options.inner)?;
        let alpha = sol.alpha;

        let beta = cols(&self.c, idx) * &alpha;
        for (&j, &a) in idx.iter().zip(alpha.iter()) {
            self.x[j] -= a;
        }
        for (&s, &v) in self.pivots.iter().zip(beta.iter()) {
            self.x[s] += v;
        }
        let f_j = rows(approx.factor(), idx);
        let correction = &a_j * &alpha - approx.factor() * f_j.tr_mul(&alpha);
        self.r -= correction;

        self.iteration += 1;
        self.epochs = (self.iteration as f64 * options.block_size as f64) / self.x.len() as f64;
        Ok(StepInfo { alpha, inner_iterations: sol.iterations, inner_cap_hit: sol.cap_hit })
    }
}

pub(crate) fn relative(norm: f64, b_norm: f64) -> f64 {
    if b_norm > 0.0 {
        norm / b_norm
    } else {
        norm
    }
}

struct ScrcdRun<'a, S: ?Sized> {
    src: &'a S,
    approx: &'a NystromApproximation,
    options: &'a SolveOptions,
    state: SolverState,
    sampler: BlockSampler,
    rng: SolverRng,
    b_norm: f64,
}

impl<S: MatrixSource + ?Sized> Iteration for ScrcdRun<'_, S> {
    fn advance(&mut self) -> Result<Advance> {
        let idx = match self.sampler.sample(self.options.block_size, self.options.sampling, &mut self.rng) {
            Ok(idx) => idx,
            Err(Error::ExactlyLowRank) => return Ok(Advance::Exhausted),
            Err(e) => return Err(e),
        };
        let info = self.state.step(self.src, self.approx, &idx, self.options)?;
        Ok(Advance::Continue { inner_cap_hit: info.inner_cap_hit })
    }

    fn residual_estimate(&self) -> f64 {
        relative(self.state.r.norm(), self.b_norm)
    }
}

/// Runs SC-RCD to completion. See [`solve_with_observer`].
pub fn solve<S: MatrixSource + ?Sized>(
    src: &S,
    approx: &NystromApproximation,
    b: &DVector<f64>,
    options: &SolveOptions,
) -> Result<(DVector<f64>, ConvergenceTrace)> {
    solve_with_observer(src, approx, b, options, |_, _| {})
}

/// Runs SC-RCD, calling `observe` with the state at every trace checkpoint.
///
/// Stops when `‖r‖/‖b‖ ≤ stop_tol`, when the epoch budget is spent, or when
/// progress stalls. Blocks are drawn from `substream(seed, STREAM_SOLVER)`.
pub fn solve_with_observer<S, F>(
    src: &S,
    approx: &NystromApproximation,
    b: &DVector<f64>,
    options: &SolveOptions,
    mut observe: F,
) -> Result<(DVector<f64>, ConvergenceTrace)>
where
    S: MatrixSource + ?Sized,
    F: FnMut(&SolverState, &TraceRecord),
{
    let n = src.dim();
    options.validate(n, approx.rank())?;
    let state = SolverState::init(src, approx, b)?;
    let sampler = BlockSampler::new(state.p.as_slice());
    let mut run = ScrcdRun {
        src,
        approx,
        options,
        state,
        sampler,
        rng: substream(options.seed, STREAM_SOLVER),
        b_norm: b.norm(),
    };
    let cfg = LoopConfig {
        label: format!("scrcd(d={}, l={})", approx.rank(), options.block_size),
        block: options.block_size,
        n,
        stop_tol: options.stop_tol,
        max_epochs: options.max_epochs,
        checkpoint_every: options.checkpoint_cadence(n),
        stall_checkpoints: options.stall_checkpoints,
        record_time: options.record_time,
    };
    let trace = driver::run(&mut run, &cfg, |run, rec| observe(&run.state, rec))?;
    Ok((run.state.x, trace))
}
