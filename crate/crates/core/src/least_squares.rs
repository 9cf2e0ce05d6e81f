//! SC-RCD for overdetermined least squares `min ‖A·x − b‖₂`.
//!
//! A randomly pivoted partial QR picks columns `S` and builds `Â = Q·R`,
//! the projection of `A` onto `span(A[:, S])`. The iterate keeps
//! `A[:, S]ᵀ·(A·x − b) = 0` while coordinate blocks outside `S` are updated
//! against the residual columns `A° = A − Â`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dense::cols;
use crate::driver::{self, Advance, Iteration, LoopConfig};
use crate::error::{Error, Result};
use crate::matrix::{back_substitution, TriangularFactor};
use crate::nystrom::EARLY_STOP_RTOL;
use crate::rng::{sample_proportional, substream, SolverRng, STREAM_SOLVER};
use crate::scrcd::{inner_solve, relative, BlockSampler, SolveOptions, StepInfo};
use crate::trace::{ConvergenceTrace, TraceRecord};

/// Column projection approximation `Â = Q·R` of a rectangular matrix.
#[derive(Debug, Clone)]
pub struct ColumnProjectionApprox {
    pivots: Vec<usize>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    residual_norms: DVector<f64>,
    requested_rank: usize,
}

impl ColumnProjectionApprox {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn requested_rank(&self) -> usize {
        self.requested_rank
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// `m × d` with orthonormal columns.
    pub fn q_factor(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `d × n`; `R[:, S]` is upper triangular in pivot order.
    pub fn r_factor(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Squared column norms of `A° = A − Q·R`.
    pub fn residual_norms(&self) -> &DVector<f64> {
        &self.residual_norms
    }

    /// `‖A°‖²_F`.
    pub fn residual_frobenius_sq(&self) -> f64 {
        self.residual_norms.sum()
    }

    pub fn approximation(&self) -> DMatrix<f64> {
        &self.q * &self.r
    }

    /// `R[:, S]` as an upper triangular factor.
    pub fn pivot_block(&self) -> TriangularFactor {
        TriangularFactor::upper(cols(&self.r, &self.pivots))
    }
}

/// Randomly pivoted partial QR of rank at most `d`.
///
/// Column pivots are sampled proportionally to the residual squared column
/// norms; each fetched column is orthogonalized twice against the current
/// basis. Stops early once the residual is exhausted.
pub fn randomly_pivoted_qr<R: Rng + ?Sized>(a: &DMatrix<f64>, d: usize, rng: &mut R) -> Result<ColumnProjectionApprox> {
    let (m, n) = a.shape();
    if d == 0 || d > m.min(n) {
        return Err(Error::InvalidParameter(format!("rank {d} must lie in 1..={}", m.min(n))));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares matrix"));
    }
    let mut w = DVector::from_iterator(n, a.column_iter().map(|c| c.norm_squared()));
    let total0 = w.sum();
    if !(total0 > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let mut pivots = Vec::with_capacity(d);
    let mut q = DMatrix::zeros(m, 0);
    let mut r = DMatrix::zeros(0, n);
    while pivots.len() < d {
        let total = w.sum();
        if !(total > EARLY_STOP_RTOL * total0) {
            break;
        }
        let Some(s) = sample_proportional(w.as_slice(), total, rng) else {
            break;
        };
        let mut v = a.column(s).into_owned();
        for _ in 0..2 {
            let coeffs = q.tr_mul(&v);
            v -= &q * coeffs;
        }
        let norm = v.norm();
        if !(norm > 0.0) {
            w[s] = 0.0;
            continue;
        }
        v /= norm;
        let mut row = a.tr_mul(&v);
        for &p in &pivots {
            row[p] = 0.0;
        }
        let t = pivots.len();
        q = q.insert_column(t, 0.0);
        q.set_column(t, &v);
        r = r.insert_row(t, 0.0);
        r.set_row(t, &row.transpose());
        for (wj, rj) in w.iter_mut().zip(row.iter()) {
            *wj = (*wj - rj * rj).max(0.0);
        }
        w[s] = 0.0;
        pivots.push(s);
    }
    Ok(ColumnProjectionApprox { pivots, q, r, residual_norms: w, requested_rank: d })
}

/// Iterate and residual of the least-squares SC-RCD.
#[derive(Debug, Clone)]
pub struct LsState {
    x: DVector<f64>,
    r: DVector<f64>,
    c: DMatrix<f64>,
    p: DVector<f64>,
    pivots: Vec<usize>,
    iteration: u64,
}

impl LsState {
    /// `x = D·b` with `D = R[:, S]⁻¹·Qᵀ`, `r = A·x − b`, `C = R[:, S]⁻¹·R`.
    pub fn init(a: &DMatrix<f64>, approx: &ColumnProjectionApprox, b: &DVector<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        if b.len() != m {
            return Err(Error::DimensionMismatch { what: "right-hand side", expected: m, got: b.len() });
        }
        if approx.r.ncols() != n || approx.q.nrows() != m {
            return Err(Error::DimensionMismatch { what: "column approximation", expected: n, got: approx.r.ncols() });
        }
        let d = approx.rank();
        let u = approx.pivot_block();
        let x_s = back_substitution(&u, &approx.q.tr_mul(b))?;
        let mut x = DVector::zeros(n);
        for (&s, &v) in approx.pivots.iter().zip(x_s.iter()) {
            x[s] = v;
        }
        let r = a * &x - b;
        let mut c = approx.r.clone();
        for j in 0..n {
            u.solve_in_place(&mut c.as_mut_slice()[j * d..(j + 1) * d])
                .expect("pivot block diagonal already checked");
        }
        let total = approx.residual_frobenius_sq();
        let mut p = approx.residual_norms.clone();
        for &s in &approx.pivots {
            p[s] = 0.0;
        }
        if total > 0.0 {
            p /= total;
        } else {
            p.fill(0.0);
        }
        Ok(Self { x, r, c, p, pivots: approx.pivots.clone(), iteration: 0 })
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    /// `r = A·x − b`.
    pub fn residual(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Solves `(A°[:, J])ᵀ·A°[:, J]·α = (A°[:, J])ᵀ·r` and updates
    /// `x[J] −= α`, `x[S] += C[:, J]·α`, `r −= A°[:, J]·α`.
    pub fn step(
        &mut self,
        a: &DMatrix<f64>,
        approx: &ColumnProjectionApprox,
        idx: &[usize],
        options: &SolveOptions,
    ) -> Result<StepInfo> {
        let residual_cols = cols(a, idx) - &approx.q * cols(&approx.r, idx);
        let gram = residual_cols.tr_mul(&residual_cols);
        let rhs = residual_cols.tr_mul(&self.r);
        let sol = inner_solve(&gram, &rhs, options.inner)?;
        let beta = cols(&self.c, idx) * &sol.alpha;
        for (&j, &v) in idx.iter().zip(sol.alpha.iter()) {
            self.x[j] -= v;
        }
        for (&s, &v) in self.pivots.iter().zip(beta.iter()) {
            self.x[s] += v;
        }
        self.r -= residual_cols * &sol.alpha;
        self.iteration += 1;
        Ok(StepInfo { alpha: sol.alpha, inner_iterations: sol.iterations, inner_cap_hit: sol.cap_hit })
    }
}

struct LsRun<'a> {
    a: &'a DMatrix<f64>,
    approx: &'a ColumnProjectionApprox,
    options: &'a SolveOptions,
    state: LsState,
    sampler: BlockSampler,
    rng: SolverRng,
    normal_b: f64,
    last: f64,
}

impl Iteration for LsRun<'_> {
    fn advance(&mut self) -> Result<Advance> {
        let idx = match self.sampler.sample(self.options.block_size, self.options.sampling, &mut self.rng) {
            Ok(idx) => idx,
            Err(Error::ExactlyLowRank) => return Ok(Advance::Exhausted),
            Err(e) => return Err(e),
        };
        let info = self.state.step(self.a, self.approx, &idx, self.options)?;
        Ok(Advance::Continue { inner_cap_hit: info.inner_cap_hit })
    }

    /// The normal-equation residual costs a full pass over `A`, so between
    /// checkpoints the last computed value stands in.
    fn residual_estimate(&self) -> f64 {
        self.last
    }

    fn checkpoint_residual(&mut self) -> f64 {
        self.last = relative(self.a.tr_mul(&self.state.r).norm(), self.normal_b);
        self.last
    }
}

/// Runs least-squares SC-RCD; see [`ls_solve_with_observer`].
pub fn ls_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    approx: &ColumnProjectionApprox,
    options: &SolveOptions,
) -> Result<(DVector<f64>, ConvergenceTrace)> {
    ls_solve_with_observer(a, b, approx, options, |_, _| {})
}

/// Runs least-squares SC-RCD. The trace reports the relative normal-equation
/// residual `‖Aᵀ·r‖/‖Aᵀ·b‖`, evaluated at checkpoints; epochs count
/// `ℓ/n` per iteration with `n` the number of columns.
pub fn ls_solve_with_observer<F>(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    approx: &ColumnProjectionApprox,
    options: &SolveOptions,
    mut observe: F,
) -> Result<(DVector<f64>, ConvergenceTrace)>
where
    F: FnMut(&LsState, &TraceRecord),
{
    let n = a.ncols();
    options.validate(n, approx.rank())?;
    let state = LsState::init(a, approx, b)?;
    let sampler = BlockSampler::new(state.p.as_slice());
    let mut run = LsRun {
        a,
        approx,
        options,
        state,
        sampler,
        rng: substream(options.seed, STREAM_SOLVER),
        normal_b: a.tr_mul(b).norm(),
        last: f64::INFINITY,
    };
    let cfg = LoopConfig {
        label: format!("ls_scrcd(d={}, l={})", approx.rank(), options.block_size),
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
