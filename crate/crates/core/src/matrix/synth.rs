use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::rng::{substream, STREAM_MATRIX};

/// Haar-distributed orthogonal matrix: QR of a standard Gaussian matrix with
/// the columns of `Q` sign-corrected so that `R` has a positive diagonal.
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r_diag = qr.r().diagonal();
    let mut q = qr.q();
    for (j, &rjj) in r_diag.iter().enumerate() {
        if rjj < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Dense `U·diag(λ)·Uᵀ` with `U` Haar-random, seeded.
pub fn synth_spectrum_source(eigenvalues: &[f64], seed: u64) -> Result<DenseMatrix> {
    if let Some((i, v)) = eigenvalues.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("eigenvalue {i} is {v}, must be nonnegative")));
    }
    let n = eigenvalues.len();
    let mut rng = substream(seed, STREAM_MATRIX);
    let u = haar_orthogonal(n, &mut rng);
    let mut scaled = u.clone();
    for (j, &lam) in eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(lam);
    }
    let a = scaled * u.transpose();
    DenseMatrix::symmetric(a)
}

/// `r` leading unit eigenvalues followed by `λ_i = i^{-decay}` for `i > r`
/// (1-based indices).
pub fn flat_tail_spectrum(n: usize, r: usize, decay: f64) -> Vec<f64> {
    (1..=n)
        .map(|i| if i <= r { 1.0 } else { (i as f64).powf(-decay) })
        .collect()
}
