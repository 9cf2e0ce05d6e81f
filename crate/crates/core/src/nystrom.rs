//! Randomly pivoted partial Cholesky (RPCholesky) and Nyström approximations.
//!
//! The factor `F` is stored in pivot order: column `t` of `F` was produced by
//! pivot `pivots[t]`, so the rows `F[pivots, :]` form a lower-triangular
//! matrix with positive diagonal.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dense::{pinv_sym, principal, symmetrize};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::{read_numeric_csv, MatrixSource, TriangularFactor};
use crate::rng::{sample_proportional, substream};

/// Pivoting stops once the residual trace falls below this fraction of the
/// original trace; beyond that point the residual diagonal is round-off.
pub const EARLY_STOP_RTOL: f64 = 1e-14;

/// Column Nyström approximation `A⟨S⟩ = F·Fᵀ` of a psd matrix.
#[derive(Debug, Clone)]
pub struct NystromApproximation {
    pivots: Vec<usize>,
    factor: DMatrix<f64>,
    residual_diag: DVector<f64>,
    requested_rank: usize,
}

impl NystromApproximation {
    /// The approximation with no pivots: `F` is `n × 0` and the residual is `A`.
    pub fn empty<S: MatrixSource + ?Sized>(src: &S) -> Self {
        let n = src.dim();
        Self {
            pivots: Vec::new(),
            factor: DMatrix::zeros(n, 0),
            residual_diag: src.diagonal().map(|v| v.max(0.0)),
            requested_rank: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Achieved rank `d′` (number of pivots).
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn requested_rank(&self) -> usize {
        self.requested_rank
    }

    /// True when pivoting stopped before the requested rank.
    pub fn stopped_early(&self) -> bool {
        self.rank() < self.requested_rank
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn residual_diag(&self) -> &DVector<f64> {
        &self.residual_diag
    }

    /// `tr(A − F·Fᵀ)`.
    pub fn residual_trace(&self) -> f64 {
        self.residual_diag.sum()
    }

    /// `F[S, :]`, lower triangular in pivot order.
    pub fn pivot_factor(&self) -> TriangularFactor {
        let d = self.rank();
        TriangularFactor::lower(DMatrix::from_fn(d, d, |a, b| self.factor[(self.pivots[a], b)]))
    }

    /// Appends pivot `s` to the factorization. Returns `false` (and leaves
    /// the approximation untouched) when the residual at `s` is zero.
    fn push_pivot<S: MatrixSource + ?Sized>(&mut self, src: &S, s: usize) -> Result<bool> {
        let g_s = self.residual_diag[s];
        if !(g_s > 0.0) {
            return Ok(false);
        }
        let t = self.rank();
        let mut col = src.columns(&[s]).column(0).into_owned();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fetched column"));
        }
        if t > 0 {
            let prev = self.factor.columns(0, t);
            let f_s = self.factor.row(s).columns(0, t).transpose();
            col -= prev * f_s;
        }
        col /= g_s.sqrt();
        for &p in &self.pivots {
            col[p] = 0.0;
        }
        self.factor = std::mem::replace(&mut self.factor, DMatrix::zeros(0, 0)).insert_column(t, 0.0);
        self.factor.set_column(t, &col);
        for (g, f) in self.residual_diag.iter_mut().zip(col.iter()) {
            *g = (*g - f * f).max(0.0);
        }
        self.residual_diag[s] = 0.0;
        self.pivots.push(s);
        Ok(true)
    }

    fn start<S: MatrixSource + ?Sized>(src: &S, requested_rank: usize) -> Result<(Self, f64)> {
        let diag = src.diagonal();
        if diag.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix diagonal"));
        }
        let mut approx = Self::empty(src);
        approx.requested_rank = requested_rank;
        approx.factor = DMatrix::zeros(src.dim(), 0);
        let trace0 = approx.residual_trace();
        if !(trace0 > 0.0) {
            return Err(Error::ZeroMatrix);
        }
        Ok((approx, trace0))
    }

    /// Writes `pivots.csv`, `factor.csv` and `residual_diag.csv` into `dir`.
    pub fn save_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut pivots = String::from("pivot\n");
        for p in &self.pivots {
            writeln!(pivots, "{p}").unwrap();
        }
        let mut factor = String::new();
        for i in 0..self.dim() {
            let row: Vec<String> = self.factor.row(i).iter().map(|v| format!("{v:e}")).collect();
            writeln!(factor, "{}", row.join(",")).unwrap();
        }
        let mut resid = String::from("residual_diag\n");
        for v in self.residual_diag.iter() {
            writeln!(resid, "{v:e}").unwrap();
        }
        for (name, body) in [("pivots.csv", pivots), ("factor.csv", factor), ("residual_diag.csv", resid)] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Reads a bundle written by [`save_bundle`](Self::save_bundle).
    pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let pivots_t = read_numeric_csv(&dir.join("pivots.csv"))?;
        let resid_t = read_numeric_csv(&dir.join("residual_diag.csv"))?;
        let n = resid_t.rows;
        let pivots: Vec<usize> = pivots_t.values.iter().map(|&v| v as usize).collect();
        let d = pivots.len();
        let factor = if d == 0 {
            DMatrix::zeros(n, 0)
        } else {
            let factor_t = read_numeric_csv(&dir.join("factor.csv"))?;
            if factor_t.rows != n || factor_t.cols != d {
                return Err(Error::parse(
                    dir.join("factor.csv"),
                    format!("expected {n}×{d}, found {}×{}", factor_t.rows, factor_t.cols),
                ));
            }
            factor_t.to_matrix()
        };
        if pivots.iter().any(|&p| p >= n) {
            return Err(Error::parse(dir.join("pivots.csv"), "pivot index out of range"));
        }
        Ok(Self {
            pivots,
            factor,
            residual_diag: DVector::from_vec(resid_t.values),
            requested_rank: d,
        })
    }
}

/// Randomly pivoted partial Cholesky of rank at most `d`.
///
/// Each pivot is drawn with probability proportional to the current residual
/// diagonal, and exactly one column of `A` is fetched per pivot. Stops early
/// (returning the achieved rank) once the residual trace is exhausted.
pub fn rpcholesky<S, R>(src: &S, d: usize, rng: &mut R) -> Result<NystromApproximation>
where
    S: MatrixSource + ?Sized,
    R: Rng + ?Sized,
{
    let n = src.dim();
    if d == 0 || d > n {
        return Err(Error::InvalidParameter(format!("rank {d} must lie in 1..={n}")));
    }
    let (mut approx, trace0) = NystromApproximation::start(src, d)?;
    while approx.rank() < d {
        let total = approx.residual_trace();
        if !(total > EARLY_STOP_RTOL * trace0) {
            break;
        }
        let Some(s) = sample_proportional(approx.residual_diag.as_slice(), total, rng) else {
            break;
        };
        approx.push_pivot(src, s)?;
    }
    Ok(approx)
}

/// Partial Cholesky with a prescribed pivot order.
///
/// Pivots whose residual diagonal has already vanished are skipped.
pub fn pivoted_cholesky<S: MatrixSource + ?Sized>(src: &S, pivots: &[usize]) -> Result<NystromApproximation> {
    let n = src.dim();
    if let Some(&bad) = pivots.iter().find(|&&p| p >= n) {
        return Err(Error::InvalidParameter(format!("pivot {bad} out of range for n = {n}")));
    }
    let (mut approx, _) = NystromApproximation::start(src, pivots.len())?;
    for &s in pivots {
        approx.push_pivot(src, s)?;
    }
    Ok(approx)
}

/// Best of `t` independent RPCholesky runs (smallest residual trace; ties go
/// to the lowest run index). Run `i` draws from `substream(seed, i)`.
pub fn best_of_t<S: MatrixSource + ?Sized>(
    src: &S,
    d: usize,
    t: usize,
    seed: u64,
    exec: Execution,
) -> Result<NystromApproximation> {
    if t == 0 {
        return Err(Error::InvalidParameter("boosting count must be at least 1".into()));
    }
    let runs = exec.map(t, |i| rpcholesky(src, d, &mut substream(seed, i as u64)));
    let mut best: Option<NystromApproximation> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.residual_trace() < b.residual_trace()) {
            best = Some(run);
        }
    }
    Ok(best.expect("t >= 1"))
}

/// `A°[J, J] = A[J, J] − F[J, :]·F[J, :]ᵀ`, symmetrized.
pub fn residual_block<S: MatrixSource + ?Sized>(
    approx: &NystromApproximation,
    src: &S,
    idx: &[usize],
) -> Result<DMatrix<f64>> {
    if let Some(&s) = idx.iter().find(|j| approx.pivots.contains(j)) {
        return Err(Error::Precondition(format!("index {s} is a pivot; its residual row is zero")));
    }
    let cols = src.columns(idx);
    Ok(residual_block_from_columns(approx, &cols, idx))
}

/// As [`residual_block`], reusing already fetched columns `A[:, J]`.
pub(crate) fn residual_block_from_columns(
    approx: &NystromApproximation,
    cols: &DMatrix<f64>,
    idx: &[usize],
) -> DMatrix<f64> {
    let a_jj = DMatrix::from_fn(idx.len(), idx.len(), |a, b| cols[(idx[a], b)]);
    let f_j = crate::dense::rows(&approx.factor, idx);
    symmetrize(&(a_jj - &f_j * f_j.transpose()))
}

/// Dense Nyström approximation `A[:, S]·A[S, S]†·A[S, :]`.
pub fn dense_nystrom(a: &DMatrix<f64>, pivots: &[usize]) -> DMatrix<f64> {
    let n = a.nrows();
    if pivots.is_empty() {
        return DMatrix::zeros(n, n);
    }
    let a_s = crate::dense::cols(a, pivots);
    let core = pinv_sym(&principal(a, pivots));
    symmetrize(&(&a_s * core * a_s.transpose()))
}
