//! Monte Carlo estimates of one-step contraction factors.
//!
//! Each trial draws a random starting point that satisfies the pivot
//! constraint, takes one step, and records the ratio of squared errors. The
//! target solution is `x* = 0` (so `b = 0`); the contraction factor of a
//! linear iteration does not depend on it. Trial `i` draws from
//! `substream(seed, STREAM_TRIALS + i)`, so estimates are identical under
//! every [`Execution`] policy.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dense::{pinv, rows};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::DenseMatrix;
use crate::nystrom::NystromApproximation;
use crate::rng::{substream, SolverRng, STREAM_TRIALS};
use crate::scrcd::{sample_block, SamplingMode, SolveOptions, SolverState};
use crate::sketch_project::row_space_complement;

/// Sample mean and standard error of per-trial contraction ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

impl ContractionEstimate {
    pub fn from_ratios(ratios: &[f64]) -> Self {
        let n = ratios.len();
        let mean = ratios.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { mean, std_error: (var / n as f64).sqrt(), trials: n }
    }

    /// `mean ≤ bound + k·SE`.
    pub fn within(&self, bound: f64, k: f64) -> bool {
        self.mean <= bound + k * self.std_error
    }
}

fn gaussian(n: usize, rng: &mut SolverRng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn collect(ratios: Vec<Result<f64>>) -> Result<ContractionEstimate> {
    if ratios.is_empty() {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    let ratios = ratios.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ContractionEstimate::from_ratios(&ratios))
}

/// SC-RCD contraction of `‖x − x*‖²_A` over one step with block size `l`.
pub fn scrcd_contraction(
    a: &DenseMatrix,
    approx: &NystromApproximation,
    l: usize,
    mode: SamplingMode,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<ContractionEstimate> {
    let n = a.nrows();
    SolveOptions::with_block_size(l).validate(n, approx.rank())?;
    let options = SolveOptions { sampling: mode, ..SolveOptions::with_block_size(l) };
    let zero = DVector::zeros(n);
    let m = a.as_matrix();
    let ratios = exec.map(trials, |i| {
        let mut rng = substream(seed, STREAM_TRIALS + i as u64);
        let mut state = SolverState::init_from(a, approx, &zero, gaussian(n, &mut rng))?;
        let before = state.x().dot(&(m * state.x()));
        let block = sample_block(state.weights().as_slice(), l, mode, &mut rng)?;
        state.step(a, approx, &block, &options)?;
        Ok(state.x().dot(&(m * state.x())) / before)
    });
    collect(ratios)
}

/// Subspace-constrained block Kaczmarz contraction of `‖x − x*‖²`: rows `J`
/// drawn i.i.d. with probability `∝ ‖A[j, :]·P‖²`, `P = I − A[𝒮, :]†·A[𝒮, :]`,
/// starting points in `x* + range(P)`.
pub fn scrk_contraction(
    a: &DMatrix<f64>,
    pivots: &[usize],
    l: usize,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<ContractionEstimate> {
    let n = a.ncols();
    let p = if pivots.is_empty() { DMatrix::identity(n, n) } else { row_space_complement(a, pivots) };
    let ap = a * &p;
    let weights: Vec<f64> = ap.row_iter().map(|r| r.norm_squared()).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ExactlyLowRank);
    }
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let ratios = exec.map(trials, |i| {
        let mut rng = substream(seed, STREAM_TRIALS + i as u64);
        let x = &p * gaussian(n, &mut rng);
        let block = sample_block(&weights, l, SamplingMode::DiagIid, &mut rng)?;
        let a_j = rows(a, &block);
        let next = &x - pinv(&(&a_j * &p)) * (&a_j * &x);
        Ok(next.norm_squared() / x.norm_squared())
    });
    collect(ratios)
}
