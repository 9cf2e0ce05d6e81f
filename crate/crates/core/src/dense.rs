//! Small dense linear-algebra helpers built on nalgebra.
//!
//! These back the reference oracle and the per-block inner solves; none of
//! them is meant for matrices larger than a few thousand rows.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative eigenvalue cutoff used for pseudoinverses.
pub const PINV_RTOL: f64 = 1e-12;

/// Eigenvalues below this fraction of the largest are treated as zero when
/// reporting the smallest nonzero eigenvalue.
pub const RANK_RTOL: f64 = 1e-10;

/// Returns `(M + Mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenvalues sorted in nonincreasing order.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues only, nonincreasing.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 {
        return DVector::zeros(0);
    }
    let mut v: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(v)
}

fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64, f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let top = vals.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let mapped = DVector::from_iterator(vals.len(), vals.iter().map(|&v| f(v, top)));
    &vecs * DMatrix::from_diagonal(&mapped) * vecs.transpose()
}

/// Moore–Penrose pseudoinverse of a symmetric matrix via eigendecomposition.
pub fn pinv_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, |v, top| if v > PINV_RTOL * top { 1.0 / v } else { 0.0 })
}

/// Principal square root of a psd matrix (negative round-off clamped).
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, |v, _| v.max(0.0).sqrt())
}

/// Inverse square root of a positive definite matrix.
pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, |v, top| if v > PINV_RTOL * top { 1.0 / v.sqrt() } else { 0.0 })
}

/// Pseudoinverse of a general matrix via SVD with relative cutoff.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let top = svd.singular_values.max();
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > PINV_RTOL * top {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// Orthogonal projector onto `range(x)`.
pub fn range_projector(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    if x.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, n);
    }
    // X (XᵀX)† Xᵀ
    let gram = x.transpose() * x;
    symmetrize(&(x * pinv_sym(&gram) * x.transpose()))
}

/// Smallest eigenvalue exceeding `RANK_RTOL·λ_max`; zero for the zero matrix.
pub fn min_positive_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let vals = sym_eigenvalues(m);
    let top = vals.iter().fold(0.0_f64, |a, &v| a.max(v));
    vals.iter()
        .copied()
        .filter(|&v| v > RANK_RTOL * top)
        .fold(f64::INFINITY, f64::min)
        .min(if top > 0.0 { f64::INFINITY } else { 0.0 })
}

/// Rows and columns `idx` of a square matrix.
pub fn principal(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

/// Rows `idx` of a matrix.
pub fn rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |a, b| m[(idx[a], b)])
}

/// Columns `idx` of a matrix.
pub fn cols(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |a, b| m[(a, idx[b])])
}

/// Selector `e_Jᵀ` of shape `|J| × n`.
pub fn selector(n: usize, idx: &[usize]) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(idx.len(), n);
    for (a, &j) in idx.iter().enumerate() {
        s[(a, j)] = 1.0;
    }
    s
}
