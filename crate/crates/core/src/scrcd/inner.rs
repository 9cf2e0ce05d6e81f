use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::options::InnerMode;
use crate::dense::{symmetrize, PINV_RTOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub alpha: DVector<f64>,
    pub iterations: usize,
    /// The iterative solver stopped at its iteration cap before reaching tolerance.
    pub cap_hit: bool,
}

/// Solves the psd block system `M·α = rhs`.
pub fn inner_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, mode: InnerMode) -> Result<InnerSolution> {
    if m.nrows() != m.ncols() || m.nrows() != rhs.len() {
        return Err(Error::DimensionMismatch { what: "inner system", expected: m.nrows(), got: rhs.len() });
    }
    if m.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("inner system"));
    }
    match mode {
        InnerMode::Direct => Ok(InnerSolution { alpha: min_norm(m, rhs), iterations: 0, cap_hit: false }),
        InnerMode::Pcg { rel_tol } => Ok(jacobi_pcg(m, rhs, rel_tol, m.nrows())),
    }
}

fn min_norm(m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let l = m.nrows();
    if l == 0 {
        return DVector::zeros(0);
    }
    if l == 1 {
        let v = m[(0, 0)];
        return DVector::from_element(1, if v > 0.0 { rhs[0] / v } else { 0.0 });
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let mut coeffs = eig.eigenvectors.tr_mul(rhs);
    for (c, &lambda) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c = if lambda > PINV_RTOL * top { *c / lambda } else { 0.0 };
    }
    &eig.eigenvectors * coeffs
}

fn jacobi_pcg(m: &DMatrix<f64>, rhs: &DVector<f64>, rel_tol: f64, cap: usize) -> InnerSolution {
    let l = m.nrows();
    let inv_diag = DVector::from_iterator(l, (0..l).map(|i| if m[(i, i)] > 0.0 { 1.0 / m[(i, i)] } else { 1.0 }));
    let mut alpha = DVector::zeros(l);
    let mut r = rhs.clone();
    let mut z = r.component_mul(&inv_diag);
    let mut rz = r.dot(&z);
    if !(rz > 0.0) {
        return InnerSolution { alpha, iterations: 0, cap_hit: false };
    }
    let target = rel_tol * rz.sqrt();
    let mut p = z.clone();
    for it in 0..cap {
        let q = m * &p;
        let pq = p.dot(&q);
        if !(pq > 0.0) {
            return InnerSolution { alpha, iterations: it, cap_hit: false };
        }
        let step = rz / pq;
        alpha.axpy(step, &p, 1.0);
        r.axpy(-step, &q, 1.0);
        z = r.component_mul(&inv_diag);
        let rz_next = r.dot(&z);
        if rz_next.max(0.0).sqrt() <= target {
            return InnerSolution { alpha, iterations: it + 1, cap_hit: false };
        }
        p = &z + &p * (rz_next / rz);
        rz = rz_next;
    }
    InnerSolution { alpha, iterations: cap, cap_hit: true }
}
