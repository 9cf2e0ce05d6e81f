//! Lazy access to symmetric positive semidefinite matrices.
//!
//! Solvers never require a materialized matrix: they pull column blocks
//! `A[:, J]` through [`MatrixSource::columns`], which is the bulk primitive,
//! while [`MatrixSource::entry`] exists for diagnostics and oracles.

mod dense;
mod kernel;
mod synth;
mod table;
mod triangular;

pub use dense::DenseMatrix;
pub use kernel::GaussianKernel;
pub use synth::{flat_tail_spectrum, haar_orthogonal, synth_spectrum_source};
pub use table::{read_numeric_csv, NumericTable};
pub use triangular::{back_substitution, forward_substitution, Orientation, TriangularFactor};

use nalgebra::{DMatrix, DVector};

use crate::exec::Execution;

/// Read-only oracle for a symmetric psd matrix.
///
/// Implementations must be safe to share across worker threads.
pub trait MatrixSource: Sync {
    fn dim(&self) -> usize;

    fn entry(&self, i: usize, j: usize) -> f64;

    /// `A[:, idx]` as an `n × |idx|` matrix.
    fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, idx.len(), |i, c| self.entry(i, idx[c]))
    }

    fn diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| self.entry(i, i))
    }

    /// `A·x`, assembled row-by-row from column batches (`A` is symmetric,
    /// so row `i` of `A` is column `i`).
    fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::zeros(n);
        const BATCH: usize = 256;
        for start in (0..n).step_by(BATCH) {
            let idx: Vec<usize> = (start..(start + BATCH).min(n)).collect();
            let block = self.columns(&idx);
            let part = block.tr_mul(x);
            out.rows_mut(start, idx.len()).copy_from(&part);
        }
        out
    }

    /// Materializes the full matrix. Test and diagnostic use only.
    fn to_dense(&self) -> DMatrix<f64> {
        let idx: Vec<usize> = (0..self.dim()).collect();
        self.columns(&idx)
    }

    fn trace(&self) -> f64 {
        self.diagonal().sum()
    }
}

impl<T: MatrixSource + ?Sized> MatrixSource for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn entry(&self, i: usize, j: usize) -> f64 {
        (**self).entry(i, j)
    }
    fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        (**self).columns(idx)
    }
    fn diagonal(&self) -> DVector<f64> {
        (**self).diagonal()
    }
    fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).matvec(x)
    }
}

/// `A·x` computed in parallel column batches; shared by the lazy sources.
pub(crate) fn batched_matvec<S: MatrixSource + ?Sized>(
    src: &S,
    x: &DVector<f64>,
    exec: Execution,
    batch: usize,
) -> DVector<f64> {
    let n = src.dim();
    let mut out = vec![0.0; n];
    exec.fill_chunks(&mut out, batch, |start, chunk| {
        let idx: Vec<usize> = (start..start + chunk.len()).collect();
        let block = src.columns(&idx);
        for (c, v) in chunk.iter_mut().enumerate() {
            *v = block.column(c).dot(x);
        }
    });
    DVector::from_vec(out)
}
