//! Comparison solvers: block randomized coordinate descent, conjugate
//! gradient and Nyström-preconditioned conjugate gradient.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::dense::{sym_eigenvalues, symmetrize};
use crate::driver::{self, Advance, Iteration, LoopConfig};
use crate::error::{Error, Result};
use crate::matrix::MatrixSource;
use crate::nystrom::NystromApproximation;
use crate::rng::{substream, SolverRng, STREAM_SOLVER};
use crate::scrcd::{inner_solve, relative, BlockSampler, SolveOptions, StepInfo};
use crate::trace::{ConvergenceTrace, TraceRecord};

/// Iterate and maintained residual of block coordinate descent.
#[derive(Debug, Clone)]
pub struct BlockRcdState {
    x: DVector<f64>,
    r: DVector<f64>,
    p: DVector<f64>,
    iteration: u64,
}

impl BlockRcdState {
    /// `x⁰ = 0`, `r⁰ = −b`, weights `p ∝ diag(A)`.
    pub fn init<S: MatrixSource + ?Sized>(src: &S, b: &DVector<f64>) -> Result<Self> {
        let n = src.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch { what: "right-hand side", expected: n, got: b.len() });
        }
        let mut p = src.diagonal().map(|v| v.max(0.0));
        let total = p.sum();
        if total > 0.0 {
            p /= total;
        } else {
            p.fill(0.0);
        }
        Ok(Self { x: DVector::zeros(n), r: DVector::zeros(n) - b, p, iteration: 0 })
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn residual(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// `x ← x − e_J·(A[J, J])†·(A[:, J]ᵀ·x − b[J])` with `r ← r − A[:, J]·α`.
    pub fn step<S: MatrixSource + ?Sized>(&mut self, src: &S, idx: &[usize], options: &SolveOptions) -> Result<StepInfo> {
        let a_j = src.columns(idx);
        let m = symmetrize(&DMatrix::from_fn(idx.len(), idx.len(), |a, c| a_j[(idx[a], c)]));
        let r_j = DVector::from_iterator(idx.len(), idx.iter().map(|&j| self.r[j]));
        let sol = inner_solve(&m, &r_j, options.inner)?;
        for (&j, &a) in idx.iter().zip(sol.alpha.iter()) {
            self.x[j] -= a;
        }
        self.r -= &a_j * &sol.alpha;
        self.iteration += 1;
        Ok(StepInfo { alpha: sol.alpha, inner_iterations: sol.iterations, inner_cap_hit: sol.cap_hit })
    }
}

struct BlockRcdRun<'a, S: ?Sized> {
    src: &'a S,
    options: &'a SolveOptions,
    state: BlockRcdState,
    sampler: BlockSampler,
    rng: SolverRng,
    b_norm: f64,
}

impl<S: MatrixSource + ?Sized> Iteration for BlockRcdRun<'_, S> {
    fn advance(&mut self) -> Result<Advance> {
        let idx = match self.sampler.sample(self.options.block_size, self.options.sampling, &mut self.rng) {
            Ok(idx) => idx,
            Err(Error::ExactlyLowRank) => return Ok(Advance::Exhausted),
            Err(e) => return Err(e),
        };
        let info = self.state.step(self.src, &idx, self.options)?;
        Ok(Advance::Continue { inner_cap_hit: info.inner_cap_hit })
    }

    fn residual_estimate(&self) -> f64 {
        relative(self.state.r.norm(), self.b_norm)
    }
}

/// Block randomized coordinate descent with the same sampling, inner
/// solves, stopping rules and random stream as SC-RCD.
pub fn block_rcd_solve<S: MatrixSource + ?Sized>(
    src: &S,
    b: &DVector<f64>,
    options: &SolveOptions,
) -> Result<(DVector<f64>, ConvergenceTrace)> {
    let n = src.dim();
    options.validate(n, 0)?;
    let state = BlockRcdState::init(src, b)?;
    let sampler = BlockSampler::new(state.p.as_slice());
    let mut run = BlockRcdRun {
        src,
        options,
        state,
        sampler,
        rng: substream(options.seed, STREAM_SOLVER),
        b_norm: b.norm(),
    };
    let cfg = LoopConfig {
        label: format!("block_rcd(l={})", options.block_size),
        block: options.block_size,
        n,
        stop_tol: options.stop_tol,
        max_epochs: options.max_epochs,
        checkpoint_every: options.checkpoint_cadence(n),
        stall_checkpoints: options.stall_checkpoints,
        record_time: options.record_time,
    };
    let trace = driver::run(&mut run, &cfg, |_, _| {})?;
    Ok((run.state.x, trace))
}

/// Options for the Krylov baselines. One iteration counts as one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrylovOptions {
    pub stop_tol: f64,
    pub max_epochs: f64,
    pub checkpoint_every: usize,
    pub stall_checkpoints: usize,
    pub record_time: bool,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { stop_tol: 1e-8, max_epochs: 1000.0, checkpoint_every: 1, stall_checkpoints: 50, record_time: true }
    }
}

impl KrylovOptions {
    fn validate(&self) -> Result<()> {
        if !(self.stop_tol > 0.0) {
            return Err(Error::InvalidParameter("stop_tol must be positive".into()));
        }
        if !(self.max_epochs > 0.0) {
            return Err(Error::InvalidParameter("max_epochs must be positive".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidParameter("checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Nyström preconditioner `M = F·Fᵀ + λ·I`, applied through Woodbury:
/// `M⁻¹·v = (v − F·(FᵀF + λI)⁻¹·Fᵀ·v)/λ`.
#[derive(Debug, Clone)]
pub struct PreconditionerNystrom {
    factor: DMatrix<f64>,
    lambda: f64,
    core: Cholesky<f64, Dyn>,
}

impl PreconditionerNystrom {
    pub fn new(factor: DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("preconditioner shift {lambda} must be positive")));
        }
        let d = factor.ncols();
        let gram = factor.tr_mul(&factor) + DMatrix::identity(d, d) * lambda;
        let core = Cholesky::new(symmetrize(&gram))
            .ok_or_else(|| Error::Domain("FᵀF + λI is not positive definite".into()))?;
        Ok(Self { factor, lambda, core })
    }

    pub fn from_approximation(approx: &NystromApproximation, lambda: f64) -> Result<Self> {
        Self::new(approx.factor().clone(), lambda)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `M⁻¹·v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.factor.ncols() == 0 {
            return v / self.lambda;
        }
        let inner = self.core.solve(&self.factor.tr_mul(v));
        (v - &self.factor * inner) / self.lambda
    }

    /// `M·v`.
    pub fn forward(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.factor * self.factor.tr_mul(v) + v * self.lambda
    }

    /// Dense `M^{-1/2}`. Diagnostic use only.
    pub fn inverse_sqrt_dense(&self) -> DMatrix<f64> {
        let n = self.factor.nrows();
        let m = &self.factor * self.factor.transpose() + DMatrix::identity(n, n) * self.lambda;
        crate::dense::sym_inv_sqrt(&m)
    }
}

struct CgRun<'a, S: ?Sized> {
    src: &'a S,
    precond: Option<&'a PreconditionerNystrom>,
    b: &'a DVector<f64>,
    b_norm: f64,
    x: DVector<f64>,
    r: DVector<f64>,
    p: DVector<f64>,
    rz: f64,
    step_sizes: Vec<f64>,
    betas: Vec<f64>,
}

impl<S: MatrixSource + ?Sized> CgRun<'_, S> {
    fn precondition(&self, r: &DVector<f64>) -> DVector<f64> {
        match self.precond {
            Some(m) => m.apply(r),
            None => r.clone(),
        }
    }
}

impl<S: MatrixSource + ?Sized> Iteration for CgRun<'_, S> {
    fn advance(&mut self) -> Result<Advance> {
        let q = self.src.matvec(&self.p);
        let curvature = self.p.dot(&q);
        if !(curvature > 0.0) {
            return Err(Error::Indefinite(curvature));
        }
        let step = self.rz / curvature;
        self.x.axpy(step, &self.p, 1.0);
        self.r.axpy(-step, &q, 1.0);
        let z = self.precondition(&self.r);
        let rz_next = self.r.dot(&z);
        let beta = rz_next / self.rz;
        self.p = z + &self.p * beta;
        self.rz = rz_next;
        self.step_sizes.push(step);
        self.betas.push(beta);
        Ok(Advance::Continue { inner_cap_hit: false })
    }

    fn residual_estimate(&self) -> f64 {
        relative(self.r.norm(), self.b_norm)
    }

    fn checkpoint_residual(&mut self) -> f64 {
        relative((self.b - self.src.matvec(&self.x)).norm(), self.b_norm)
    }
}

/// Result of a Krylov solve, including the Lanczos coefficients.
#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: DVector<f64>,
    pub trace: ConvergenceTrace,
    step_sizes: Vec<f64>,
    betas: Vec<f64>,
}

impl KrylovOutcome {
    /// Eigenvalues of the Lanczos tridiagonal matrix assembled from the CG
    /// coefficients: Ritz values of the (preconditioned) operator.
    pub fn ritz_values(&self) -> DVector<f64> {
        let k = self.step_sizes.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = 1.0 / self.step_sizes[i] + if i > 0 { self.betas[i - 1] / self.step_sizes[i - 1] } else { 0.0 };
            if i + 1 < k {
                let off = self.betas[i].sqrt() / self.step_sizes[i];
                t[(i, i + 1)] = off;
                t[(i + 1, i)] = off;
            }
        }
        sym_eigenvalues(&t)
    }
}

fn krylov<S: MatrixSource + ?Sized>(
    src: &S,
    b: &DVector<f64>,
    precond: Option<&PreconditionerNystrom>,
    options: &KrylovOptions,
    label: String,
) -> Result<KrylovOutcome> {
    let n = src.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { what: "right-hand side", expected: n, got: b.len() });
    }
    options.validate()?;
    let mut run = CgRun {
        src,
        precond,
        b,
        b_norm: b.norm(),
        x: DVector::zeros(n),
        r: b.clone(),
        p: DVector::zeros(n),
        rz: 0.0,
        step_sizes: Vec::new(),
        betas: Vec::new(),
    };
    run.p = run.precondition(b);
    run.rz = b.dot(&run.p);
    let cfg = LoopConfig {
        label,
        block: 1,
        n: 1,
        stop_tol: options.stop_tol,
        max_epochs: options.max_epochs,
        checkpoint_every: options.checkpoint_every,
        stall_checkpoints: options.stall_checkpoints,
        record_time: options.record_time,
    };
    let trace = driver::run(&mut run, &cfg, |_: &CgRun<'_, S>, _: &TraceRecord| {})?;
    Ok(KrylovOutcome { x: run.x, trace, step_sizes: run.step_sizes, betas: run.betas })
}

/// Conjugate gradient from `x⁰ = 0`; the trace reports the true residual.
pub fn cg_solve<S: MatrixSource + ?Sized>(
    src: &S,
    b: &DVector<f64>,
    options: &KrylovOptions,
) -> Result<(DVector<f64>, ConvergenceTrace)> {
    cg_solve_detailed(src, b, options).map(|o| (o.x, o.trace))
}

/// As [`cg_solve`], also returning the Lanczos coefficients.
pub fn cg_solve_detailed<S: MatrixSource + ?Sized>(
    src: &S,
    b: &DVector<f64>,
    options: &KrylovOptions,
) -> Result<KrylovOutcome> {
    krylov(src, b, None, options, "cg".into())
}

/// Preconditioned CG with `M = F·Fᵀ + λ·I` built from `approx`.
pub fn nystrom_pcg_solve<S: MatrixSource + ?Sized>(
    src: &S,
    b: &DVector<f64>,
    approx: &NystromApproximation,
    lambda: f64,
    options: &KrylovOptions,
) -> Result<(DVector<f64>, ConvergenceTrace)> {
    let precond = PreconditionerNystrom::from_approximation(approx, lambda)?;
    pcg_solve_detailed(src, b, &precond, options).map(|o| (o.x, o.trace))
}

/// Preconditioned CG with an explicit preconditioner.
pub fn pcg_solve_detailed<S: MatrixSource + ?Sized>(
    src: &S,
    b: &DVector<f64>,
    precond: &PreconditionerNystrom,
    options: &KrylovOptions,
) -> Result<KrylovOutcome> {
    if precond.factor.nrows() != src.dim() {
        return Err(Error::DimensionMismatch {
            what: "preconditioner rows",
            expected: src.dim(),
            got: precond.factor.nrows(),
        });
    }
    krylov(src, b, Some(precond), options, format!("nystrom_pcg(d={})", precond.factor.ncols()))
}
