use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{read_numeric_csv, MatrixSource};
use crate::error::{Error, Result};

/// In-memory real matrix.
///
/// When flagged symmetric, the upper triangle is the source of truth and is
/// mirrored into the lower triangle at construction.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    data: DMatrix<f64>,
    symmetric: bool,
}

impl DenseMatrix {
    /// General (possibly rectangular) matrix. Entries must be finite.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense matrix"));
        }
        Ok(Self {
            data,
            symmetric: false,
        })
    }

    /// Square symmetric matrix built from the upper triangle of `data`.
    pub fn symmetric(mut data: DMatrix<f64>) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::DimensionMismatch {
                what: "symmetric matrix columns",
                expected: data.nrows(),
                got: data.ncols(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense matrix"));
        }
        let n = data.nrows();
        for j in 0..n {
            for i in j + 1..n {
                data[(i, j)] = data[(j, i)];
            }
        }
        Ok(Self {
            data,
            symmetric: true,
        })
    }

    /// Loads a matrix from CSV (comma separated, optional header row).
    pub fn from_csv(path: impl AsRef<Path>, symmetric: bool) -> Result<Self> {
        let table = read_numeric_csv(path.as_ref())?;
        let m = table.to_matrix();
        if symmetric {
            Self::symmetric(m)
        } else {
            Self::new(m)
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }
}

impl MatrixSource for DenseMatrix {
    fn dim(&self) -> usize {
        debug_assert!(self.symmetric, "MatrixSource requires a symmetric matrix");
        self.data.nrows()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        let n = self.data.nrows();
        let mut out = DMatrix::zeros(n, idx.len());
        for (c, &j) in idx.iter().enumerate() {
            out.set_column(c, &self.data.column(j));
        }
        out
    }

    fn diagonal(&self) -> DVector<f64> {
        self.data.diagonal()
    }

    fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.data * x
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.data.clone()
    }
}
