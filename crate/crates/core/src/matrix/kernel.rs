use nalgebra::{DMatrix, DVector};

use super::{batched_matvec, MatrixSource};
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Lazy Gaussian kernel matrix plus ridge, `K + λI`, with
/// `K_ij = exp(-‖z_i − z_j‖² / (2σ²))`.
///
/// Only the features and their squared norms are stored.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    features: Vec<f64>,
    norms: Vec<f64>,
    m: usize,
    p: usize,
    sigma: f64,
    ridge: f64,
    exec: Execution,
}

impl GaussianKernel {
    /// `features` is row-major `m × p`.
    pub fn new(features: Vec<f64>, m: usize, p: usize, sigma: f64, ridge: f64) -> Result<Self> {
        if features.len() != m * p {
            return Err(Error::DimensionMismatch {
                what: "feature table length",
                expected: m * p,
                got: features.len(),
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {sigma}")));
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::InvalidParameter(format!("ridge must be nonnegative, got {ridge}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel features"));
        }
        let norms = features.chunks(p.max(1)).map(|r| r.iter().map(|v| v * v).sum()).collect();
        Ok(Self {
            features,
            norms: if p == 0 { vec![0.0; m] } else { norms },
            m,
            p,
            sigma,
            ridge,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// Same features and bandwidth with a different ridge.
    pub fn with_ridge(&self, ridge: f64) -> Result<Self> {
        Ok(Self::new(self.features.clone(), self.m, self.p, self.sigma, ridge)?.with_execution(self.exec))
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    fn kernel(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let dot: f64 = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
        let sq = (self.norms[i] + self.norms[j] - 2.0 * dot).max(0.0);
        (-sq / (2.0 * self.sigma * self.sigma)).exp()
    }
}

impl MatrixSource for GaussianKernel {
    fn dim(&self) -> usize {
        self.m
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.kernel(i, j) + if i == j { self.ridge } else { 0.0 }
    }

    fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        let n = self.m;
        let cols = self.exec.map(idx.len(), |c| {
            let j = idx[c];
            (0..n).map(|i| self.entry(i, j)).collect::<Vec<f64>>()
        });
        let mut out = DMatrix::zeros(n, idx.len());
        for (c, col) in cols.into_iter().enumerate() {
            out.column_mut(c).copy_from_slice(&col);
        }
        out
    }

    fn diagonal(&self) -> DVector<f64> {
        DVector::from_element(self.m, 1.0 + self.ridge)
    }

    fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        batched_matvec(self, x, self.exec, 128)
    }
}
