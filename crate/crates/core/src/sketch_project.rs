//! Dense reference implementation of subspace-constrained sketch-and-project.
//!
//! For a consistent system `A·x = b`, a geometry `B ≻ 0` and a constraint
//! matrix `Q`, every iterate satisfies `Q·A·x = Q·b` and one step projects
//! (in the `B`-norm) onto `{x : S·A·x = S·b, Q·A·x = Q·b}` for a sketch `S`.
//! Everything here is dense and meant for `n ≤ 128`; the module serves as the
//! correctness and rate oracle for the lazy solvers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dense::{
    min_positive_eigenvalue, pinv, pinv_sym, range_projector, rows, selector, sym_eigenvalues, sym_inv_sqrt,
    sym_sqrt, symmetrize,
};
use crate::error::{Error, Result};
use crate::nystrom::dense_nystrom;

/// Relative tolerance for feasibility checks on inputs and outputs.
pub const FEASIBILITY_RTOL: f64 = 1e-8;

/// A consistent system with geometry `B`, constraint `Q` and feasible start `x0`.
#[derive(Debug, Clone)]
pub struct FrameworkProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub geometry: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub x0: DVector<f64>,
    b_half: DMatrix<f64>,
    b_inv_half: DMatrix<f64>,
}

/// The projectors of one sketch-and-project step.
#[derive(Debug, Clone)]
pub struct ProjectorPair {
    /// Onto `null(Q·A·B^{-1/2})`.
    pub p: DMatrix<f64>,
    /// Onto `range(P·B^{-1/2}·Aᵀ·Sᵀ)`.
    pub z: DMatrix<f64>,
}

fn scaled_violation(m: &DMatrix<f64>, x: &DVector<f64>, rhs: &DVector<f64>) -> (f64, f64) {
    ((m * x - rhs).norm(), m.norm() * x.norm() + rhs.norm())
}

impl FrameworkProblem {
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        geometry: DMatrix<f64>,
        q: DMatrix<f64>,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let (m, n) = a.shape();
        if b.len() != m {
            return Err(Error::DimensionMismatch { what: "right-hand side", expected: m, got: b.len() });
        }
        if geometry.shape() != (n, n) {
            return Err(Error::DimensionMismatch { what: "geometry matrix", expected: n, got: geometry.nrows() });
        }
        if q.ncols() != m {
            return Err(Error::DimensionMismatch { what: "constraint columns", expected: m, got: q.ncols() });
        }
        if x0.len() != n {
            return Err(Error::DimensionMismatch { what: "initial vector", expected: n, got: x0.len() });
        }
        let geometry = symmetrize(&geometry);
        let low = sym_eigenvalues(&geometry).iter().copied().fold(f64::INFINITY, f64::min);
        if !(low > 0.0) {
            return Err(Error::Domain(format!("geometry matrix is not positive definite (min eigenvalue {low:e})")));
        }
        let problem = Self {
            b_half: sym_sqrt(&geometry),
            b_inv_half: sym_inv_sqrt(&geometry),
            a,
            b,
            geometry,
            q,
            x0,
        };
        problem.check_constraint(&problem.x0)?;
        Ok(problem)
    }

    /// Problem in the geometry `B = A` with constraint `Q = e_Sᵀ` (the
    /// setting of coordinate descent on a psd system).
    pub fn coordinate(a: DMatrix<f64>, b: DVector<f64>, pivots: &[usize], x0: DVector<f64>) -> Result<Self> {
        let q = selector(a.nrows(), pivots);
        Self::new(a.clone(), b, a, q, x0)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn b_half(&self) -> &DMatrix<f64> {
        &self.b_half
    }

    pub fn b_inv_half(&self) -> &DMatrix<f64> {
        &self.b_inv_half
    }

    fn check_constraint(&self, x: &DVector<f64>) -> Result<()> {
        if self.q.nrows() == 0 {
            return Ok(());
        }
        let qa = &self.q * &self.a;
        let (viol, scale) = scaled_violation(&qa, x, &(&self.q * &self.b));
        if viol > FEASIBILITY_RTOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Precondition(format!("constraint Q·A·x = Q·b violated by {viol:e}")));
        }
        Ok(())
    }

    /// `‖x‖_B`.
    pub fn b_norm(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.geometry * x)).max(0.0).sqrt()
    }

    /// `B^{1/2}·(x − x*)`.
    pub fn error_vector(&self, x: &DVector<f64>, x_star: &DVector<f64>) -> DVector<f64> {
        &self.b_half * (x - x_star)
    }

    /// `P = I − (Q·A·B^{-1/2})†·Q·A·B^{-1/2}`.
    pub fn projector_p(&self) -> DMatrix<f64> {
        let m = &self.q * &self.a * &self.b_inv_half;
        let n = self.dim();
        symmetrize(&(DMatrix::identity(n, n) - pinv(&m) * m))
    }

    /// Both projectors for sketch `s` (rows are sketch vectors in `ℝ^m`).
    pub fn projectors(&self, s: &DMatrix<f64>) -> ProjectorPair {
        let p = self.projector_p();
        let z = range_projector(&(&p * &self.b_inv_half * self.a.transpose() * s.transpose()));
        ProjectorPair { p, z }
    }

    /// Projector of the unconstrained step: onto `range(B^{-1/2}·Aᵀ·Sᵀ)`.
    pub fn unconstrained_projector(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        range_projector(&(&self.b_inv_half * self.a.transpose() * s.transpose()))
    }
}

/// `x* = x0 − B⁻¹Aᵀ(A·B⁻¹·Aᵀ)†(A·x0 − b)`, the `B`-norm projection of `x0`
/// onto `{x : A·x = b}`.
pub fn min_norm_solution(problem: &FrameworkProblem) -> Result<DVector<f64>> {
    let b_inv = &problem.b_inv_half * &problem.b_inv_half;
    let a = &problem.a;
    let gram = symmetrize(&(a * &b_inv * a.transpose()));
    let x = &problem.x0 - &b_inv * a.transpose() * pinv_sym(&gram) * (a * &problem.x0 - &problem.b);
    let (viol, scale) = scaled_violation(a, &x, &problem.b);
    if viol > FEASIBILITY_RTOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Inconsistent(viol / scale.max(f64::MIN_POSITIVE)));
    }
    Ok(x)
}

/// `P = I − (Q·A·B^{-1/2})†·Q·A·B^{-1/2}` for explicit inputs.
pub fn projector_p(a: &DMatrix<f64>, geometry: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let m = q * a * sym_inv_sqrt(geometry);
    symmetrize(&(DMatrix::identity(n, n) - pinv(&m) * m))
}

/// One subspace-constrained sketch-and-project step from `x` with sketch `s`:
/// `x′ = x − B^{-1/2}·P·B^{-1/2}·Aᵀ·Sᵀ·(S·A·B^{-1/2}·P·B^{-1/2}·Aᵀ·Sᵀ)†·S·(A·x − b)`.
pub fn sc_sap_step(problem: &FrameworkProblem, s: &DMatrix<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    if s.ncols() != problem.a.nrows() {
        return Err(Error::DimensionMismatch { what: "sketch columns", expected: problem.a.nrows(), got: s.ncols() });
    }
    problem.check_constraint(x)?;
    let p = problem.projector_p();
    let w = &problem.b_inv_half * &p * &problem.b_inv_half * problem.a.transpose() * s.transpose();
    let core = symmetrize(&(s * &problem.a * &w));
    Ok(x - &w * pinv_sym(&core) * (s * (&problem.a * x - &problem.b)))
}

/// Subspace-constrained block Kaczmarz step
/// `x′ = x − (A[J, :]·P)†·(A[J, :]·x − b[J])` with `P = I − A[𝒮, :]†·A[𝒮, :]`.
pub fn scrk_block_step(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    pivots: &[usize],
    block: &[usize],
    x: &DVector<f64>,
) -> DVector<f64> {
    let p = row_space_complement(a, pivots);
    let a_j = rows(a, block);
    let b_j = DVector::from_iterator(block.len(), block.iter().map(|&j| b[j]));
    x - pinv(&(&a_j * p)) * (a_j * x - b_j)
}

/// `I − A[𝒮, :]†·A[𝒮, :]`.
pub fn row_space_complement(a: &DMatrix<f64>, pivots: &[usize]) -> DMatrix<f64> {
    let n = a.ncols();
    let a_s = rows(a, pivots);
    symmetrize(&(DMatrix::identity(n, n) - pinv(&a_s) * a_s))
}

/// `A° = A − A⟨S⟩` for dense psd `A`.
pub fn residual_matrix(a: &DMatrix<f64>, pivots: &[usize]) -> DMatrix<f64> {
    symmetrize(&(a - dense_nystrom(a, pivots)))
}

/// `E[Z₁] = P·A·P / tr(A°)` for diagonal sampling in the geometry `B = A`,
/// where `P = I − A^{1/2}·e_S·(A[S, S])†·e_Sᵀ·A^{1/2}`.
pub fn expected_projector_diag(a: &DMatrix<f64>, pivots: &[usize]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let residual_trace = residual_matrix(a, pivots).trace();
    if !(residual_trace > FEASIBILITY_RTOL * a.trace().abs()) {
        return Err(Error::ExactlyLowRank);
    }
    let root = sym_sqrt(a);
    let e_s = selector(n, pivots).transpose();
    let a_ss = crate::dense::principal(a, pivots);
    let p = DMatrix::identity(n, n) - &root * &e_s * pinv_sym(&a_ss) * e_s.transpose() * &root;
    Ok(symmetrize(&(&p * a * &p)) / residual_trace)
}

/// Contraction factors per iteration guaranteed by the convergence theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    /// `(1 − λ⁺_min(A°)/tr(A°))^ℓ`, diagonal sampling.
    pub scrcd_rate: f64,
    /// `(1 − σ⁺_min(A·P)²/‖A·P‖²_F)^ℓ`, block Kaczmarz with row-norm sampling.
    pub scrk_rate: f64,
    /// `(1 − λ⁺_min(D^{†/2}·A°·D^{†/2})/(n − d))^ℓ`, uniform sampling, `D = diag(A°)`.
    pub uniform_rate: f64,
}

/// Rate bounds for pivot set `pivots` and block size `l` on dense psd `a`.
pub fn rate_bounds(a: &DMatrix<f64>, pivots: &[usize], l: usize) -> RateBounds {
    let n = a.nrows();
    let d = pivots.len();
    let l = l as i32;
    let residual = residual_matrix(a, pivots);
    let tr = residual.trace();
    let scrcd_rate = if tr > 0.0 {
        (1.0 - min_positive_eigenvalue(&residual) / tr).max(0.0).powi(l)
    } else {
        0.0
    };

    let scrk_rate = scrk_rate_bound(a, pivots, l as usize);

    let inv_sqrt = DVector::from_iterator(
        n,
        residual.diagonal().iter().map(|&v| if v > FEASIBILITY_RTOL * tr { 1.0 / v.sqrt() } else { 0.0 }),
    );
    let scaled = DMatrix::from_fn(n, n, |i, j| inv_sqrt[i] * residual[(i, j)] * inv_sqrt[j]);
    let uniform_rate = if n > d && tr > 0.0 {
        (1.0 - min_positive_eigenvalue(&scaled) / (n - d) as f64).max(0.0).powi(l)
    } else {
        0.0
    };
    RateBounds { scrcd_rate, scrk_rate, uniform_rate }
}

/// `(1 − σ⁺_min(A·P)²/‖A·P‖²_F)^ℓ` for any (possibly rectangular) `a`, with
/// `P = I − A[𝒮, :]†·A[𝒮, :]` (`P = I` when `pivots` is empty).
pub fn scrk_rate_bound(a: &DMatrix<f64>, pivots: &[usize], l: usize) -> f64 {
    let ap = if pivots.is_empty() { a.clone() } else { a * row_space_complement(a, pivots) };
    let fro2 = ap.norm_squared();
    if fro2 > 0.0 {
        let gram = ap.transpose() * &ap;
        (1.0 - min_positive_eigenvalue(&gram) / fro2).max(0.0).powi(l as i32)
    } else {
        0.0
    }
}

/// Projectors onto the span of the first `t` columns of `x`, for every `t`,
/// built by the rank-one recursion
/// `Π_t = Π_{t−1} + (I − Π_{t−1})·v·vᵀ·(I − Π_{t−1}) / (vᵀ·(I − Π_{t−1})·v)`.
///
/// A column already in the span leaves the projector unchanged.
pub fn incremental_range_projectors(x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let n = x.nrows();
    let mut current = DMatrix::<f64>::zeros(n, n);
    let mut out = Vec::with_capacity(x.ncols());
    for t in 0..x.ncols() {
        let v = x.column(t);
        let u = v - &current * v;
        let denom = v.dot(&u);
        if denom > crate::dense::RANK_RTOL * v.norm_squared() {
            current += &u * u.transpose() / denom;
            current = symmetrize(&current);
        }
        out.push(current.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = substream(seed, 77);
        DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn random_pd(n: usize, seed: u64) -> DMatrix<f64> {
        let g = gaussian(n, n, seed);
        symmetrize(&(&g * g.transpose() + DMatrix::identity(n, n) * 0.5))
    }

    /// A random `(A, b, B, Q, x0)` with `Q·A·x0 = Q·b`.
    fn random_problem(m: usize, n: usize, d: usize, seed: u64) -> FrameworkProblem {
        let a = gaussian(m, n, seed);
        let x_true = gaussian(n, 1, seed + 1).column(0).into_owned();
        let b = &a * &x_true;
        let geometry = random_pd(n, seed + 2);
        let q = gaussian(d, m, seed + 3);
        // Feasible start: project a random point onto {Q·A·x = Q·b} in the Euclidean metric.
        let qa = &q * &a;
        let z = gaussian(n, 1, seed + 4).column(0).into_owned();
        let x0 = &z - pinv(&qa) * (&qa * &z - &q * &b);
        FrameworkProblem::new(a, b, geometry, q, x0).unwrap()
    }

    fn is_projector(m: &DMatrix<f64>, tol: f64) -> bool {
        (m * m - m).norm() <= tol && (m - m.transpose()).norm() <= tol
    }

    #[test]
    fn min_norm_identity_and_row() {
        let b = dvector![1.0, -2.0, 3.0];
        let pr = FrameworkProblem::new(
            DMatrix::identity(3, 3),
            b.clone(),
            DMatrix::identity(3, 3),
            DMatrix::zeros(0, 3),
            DVector::zeros(3),
        )
        .unwrap();
        assert!((min_norm_solution(&pr).unwrap() - b).norm() < 1e-14);

        let pr = FrameworkProblem::new(
            dmatrix![1.0, 1.0],
            dvector![2.0],
            DMatrix::identity(2, 2),
            DMatrix::zeros(0, 1),
            DVector::zeros(2),
        )
        .unwrap();
        assert!((min_norm_solution(&pr).unwrap() - dvector![1.0, 1.0]).norm() < 1e-14);
    }

    #[test]
    fn min_norm_is_feasible_and_optimal() {
        let a = gaussian(4, 6, 10);
        let b = &a * gaussian(6, 1, 11).column(0);
        let geometry = random_pd(6, 12);
        let x0 = gaussian(6, 1, 13).column(0).into_owned();
        let pr = FrameworkProblem::new(a.clone(), b.clone(), geometry, DMatrix::zeros(0, 4), x0.clone()).unwrap();
        let x_star = min_norm_solution(&pr).unwrap();
        assert!((&a * &x_star - &b).norm() <= 1e-10 * b.norm());
        let null = DMatrix::identity(6, 6) - pinv(&a) * &a;
        let best = pr.b_norm(&(&x_star - &x0));
        let mut rng = substream(14, 0);
        for _ in 0..100 {
            let v = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &x_star + &null * v;
            assert!(pr.b_norm(&(&x - &x0)) >= best - 1e-10);
        }
    }

    #[test]
    fn min_norm_detects_inconsistency() {
        let pr = FrameworkProblem::new(
            dmatrix![1.0; 1.0],
            dvector![1.0, 3.0],
            DMatrix::identity(1, 1),
            DMatrix::zeros(0, 2),
            DVector::zeros(1),
        )
        .unwrap();
        assert!(matches!(min_norm_solution(&pr), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn projector_p_cases() {
        let a = gaussian(5, 5, 20);
        let geometry = random_pd(5, 21);
        let p = projector_p(&a, &geometry, &DMatrix::zeros(0, 5));
        assert!((p - DMatrix::identity(5, 5)).norm() < 1e-12);
        let p = projector_p(&a, &geometry, &DMatrix::identity(5, 5));
        assert!(p.norm() < 1e-9);

        // Q·A·B^{-1/2} of shape 3×8: P fixes an explicit null-space basis.
        let a = gaussian(8, 8, 22);
        let q = gaussian(3, 8, 23);
        let geometry = random_pd(8, 24);
        let m = &q * &a * sym_inv_sqrt(&geometry);
        let p = projector_p(&a, &geometry, &q);
        assert!(is_projector(&p, 1e-10));
        let svd = m.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        let full = nalgebra::linalg::QR::new(vt.transpose().insert_columns(3, 5, 0.0)).q();
        let basis = full.columns(3, 5);
        assert!((&p * basis - basis).norm() <= 1e-10);
        assert!((&p * m.transpose()).norm() <= 1e-10 * m.norm());
    }

    #[test]
    fn zero_and_full_sketch() {
        let pr = random_problem(10, 10, 3, 30);
        let x = pr.x0.clone();
        let step = sc_sap_step(&pr, &DMatrix::zeros(2, 10), &x).unwrap();
        assert!((step - &x).norm() < 1e-14);
        let x_star = min_norm_solution(&pr).unwrap();
        let step = sc_sap_step(&pr, &DMatrix::identity(10, 10), &x).unwrap();
        assert!((&step - &x_star).norm() <= 1e-8 * x_star.norm());
    }

    #[test]
    fn step_rejects_infeasible_start() {
        let pr = random_problem(8, 8, 2, 31);
        let x = &pr.x0 + DVector::from_element(8, 1.0);
        assert!(matches!(sc_sap_step(&pr, &DMatrix::identity(2, 8), &x), Err(Error::Precondition(_))));
    }

    #[test]
    fn kaczmarz_cases() {
        let a = gaussian(6, 6, 40);
        let b = &a * gaussian(6, 1, 41).column(0);
        let x = DVector::zeros(6);
        let all: Vec<usize> = (0..6).collect();
        let pr = FrameworkProblem::new(a.clone(), b.clone(), DMatrix::identity(6, 6), DMatrix::zeros(0, 6), x.clone())
            .unwrap();
        let full = scrk_block_step(&a, &b, &[], &all, &x);
        assert!((full - min_norm_solution(&pr).unwrap()).norm() <= 1e-9);

        let x = gaussian(6, 1, 42).column(0).into_owned();
        let row = a.row(2).transpose();
        let expected = &x - &row * ((row.dot(&x) - b[2]) / row.norm_squared());
        assert!((scrk_block_step(&a, &b, &[], &[2], &x) - expected).norm() <= 1e-12);
    }

    #[test]
    fn expected_projector_cases() {
        let a = random_pd(5, 50);
        let e = expected_projector_diag(&a, &[]).unwrap();
        assert!((e - &a / a.trace()).norm() <= 1e-12);

        let e = expected_projector_diag(&dmatrix![2.0, 0.0; 0.0, 1.0], &[0]).unwrap();
        assert!((e - dmatrix![0.0, 0.0; 0.0, 1.0]).norm() <= 1e-12);

        let a = random_pd(10, 51);
        let s = [1, 4, 7];
        let e = expected_projector_diag(&a, &s).unwrap();
        let residual = residual_matrix(&a, &s);
        let lhs = min_positive_eigenvalue(&e);
        let rhs = min_positive_eigenvalue(&residual) / residual.trace();
        assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));

        let low = dmatrix![1.0, 1.0; 1.0, 1.0];
        assert!(matches!(expected_projector_diag(&low, &[0]), Err(Error::ExactlyLowRank)));
    }

    #[test]
    fn expected_projector_matches_monte_carlo() {
        let n = 16;
        let a = random_pd(n, 52);
        let s = [0, 5, 9, 12];
        let x0 = DVector::zeros(n);
        let b = DVector::zeros(n);
        let pr = FrameworkProblem::coordinate(a.clone(), b, &s, x0).unwrap();
        let diag = residual_matrix(&a, &s).diagonal();
        let weights: Vec<f64> = diag.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        let z: Vec<DMatrix<f64>> = (0..n).map(|j| pr.projectors(&selector(n, &[j])).z).collect();
        let exact = expected_projector_diag(&a, &s).unwrap();
        let trials = 20000;
        let mut rng = substream(53, 0);
        let mut sum = DMatrix::zeros(n, n);
        let mut sum_sq = DMatrix::zeros(n, n);
        for _ in 0..trials {
            let j = crate::rng::sample_proportional(&weights, total, &mut rng).unwrap();
            sum += &z[j];
            sum_sq += z[j].component_mul(&z[j]);
        }
        let mean = &sum / trials as f64;
        // The 256 entries are strongly correlated (all move with the sample
        // count of each coordinate), so the 3-sigma level is applied
        // family-wise: two-sided p = 0.0027 split over 256 comparisons is a
        // per-entry threshold of about 4.4 SE.
        let z_family = 4.4;
        for i in 0..n {
            for k in 0..n {
                let var = (sum_sq[(i, k)] / trials as f64 - mean[(i, k)].powi(2)).max(0.0);
                let se = (var / trials as f64).sqrt();
                let gap = (mean[(i, k)] - exact[(i, k)]).abs();
                assert!(gap <= z_family * se + 1e-10, "entry ({i},{k}): gap {gap:e}, se {se:e}");
            }
        }
    }

    #[test]
    fn rate_bound_cases() {
        let r = rate_bounds(&DMatrix::identity(8, 8), &[], 1);
        assert!((r.scrcd_rate - (1.0 - 1.0 / 8.0)).abs() < 1e-12);
        // A° of rank one after removing the pivot coordinate.
        let a = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 1.0; 0.0, 1.0, 1.0];
        let r = rate_bounds(&a, &[0], 1);
        assert!(r.scrcd_rate.abs() < 1e-12);
    }

    #[test]
    fn fixed_point_identity_and_invariant_subspace() {
        for seed in 0..10 {
            let pr = random_problem(12, 12, 3, 100 + seed);
            let x_star = min_norm_solution(&pr).unwrap();
            // The Euclidean projection of the solution set is not the B-projection,
            // so restrict x* to the feasible affine set through x0.
            let mut x = pr.x0.clone();
            let root = pr.b_half().clone();
            let p = pr.projector_p();
            let range = range_projector(&(&p * pr.b_inv_half() * pr.a.transpose()));
            let mut rng = substream(seed, 1);
            for _ in 0..5 {
                let s = DMatrix::from_fn(2, 12, |_, _| rng.sample::<f64, _>(StandardNormal));
                let next = sc_sap_step(&pr, &s, &x).unwrap();
                let pair = pr.projectors(&s);
                assert!(is_projector(&pair.p, 1e-10) && is_projector(&pair.z, 1e-10));
                assert!((&pair.z * &pair.p - &pair.z).norm() <= 1e-10);
                let lhs = &root * (&next - &x_star);
                let rhs = (DMatrix::identity(12, 12) - &pair.z) * (&root * (&x - &x_star));
                assert!((&lhs - &rhs).norm() <= 1e-9 * (1.0 + rhs.norm()));
                let (viol, scale) = scaled_violation(&(&s * &pr.a), &next, &(&s * &pr.b));
                assert!(viol <= 1e-9 * scale);
                let (viol, scale) = scaled_violation(&(&pr.q * &pr.a), &next, &(&pr.q * &pr.b));
                assert!(viol <= 1e-9 * scale);
                let e = &root * (&next - &x_star);
                assert!((&e - &range * &e).norm() <= 1e-9 * (1.0 + e.norm()));
                x = next;
            }
        }
    }

    #[test]
    fn constrained_step_decreases_more() {
        for seed in 0..20 {
            let pr = random_problem(10, 10, 3, 200 + seed);
            let x_star = min_norm_solution(&pr).unwrap();
            let e = pr.error_vector(&pr.x0, &x_star);
            let mut rng = substream(seed, 2);
            let s = DMatrix::from_fn(2, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
            let z = pr.projectors(&s).z;
            let z_free = pr.unconstrained_projector(&s);
            assert!((&z * &e).norm() >= (&z_free * &e).norm() - 1e-10);
        }
    }

    #[test]
    fn rank_one_projector_updates() {
        let x = gaussian(9, 5, 300);
        let inc = incremental_range_projectors(&x);
        for t in 1..=5 {
            let direct = range_projector(&x.columns(0, t).into_owned());
            assert!((&inc[t - 1] - direct).norm() <= 1e-9);
        }
        // A dependent column changes nothing.
        let dup = x.clone().insert_column(2, 0.0);
        let mut dup = dup;
        let c0 = dup.column(0).into_owned();
        dup.set_column(2, &(c0 * 2.0));
        let inc = incremental_range_projectors(&dup);
        assert!((&inc[2] - &inc[1]).norm() <= 1e-12);
    }

    #[test]
    fn one_step_expectation_identity() {
        let n = 12;
        let a = random_pd(n, 400);
        let s = [2, 7];
        let x_true = gaussian(n, 1, 401).column(0).into_owned();
        let b = &a * &x_true;
        let x0 = {
            let qa = rows(&a, &s);
            let z = gaussian(n, 1, 402).column(0).into_owned();
            &z - pinv(&qa) * (&qa * &z - DVector::from_iterator(2, s.iter().map(|&i| b[i])))
        };
        let pr = FrameworkProblem::coordinate(a.clone(), b, &s, x0.clone()).unwrap();
        let x_star = min_norm_solution(&pr).unwrap();
        let e = pr.error_vector(&x0, &x_star);
        let weights = residual_matrix(&a, &s).diagonal().map(|v| v.max(0.0));
        let total = weights.sum();
        let mut expected_err = 0.0;
        let mut expected_z = DMatrix::zeros(n, n);
        for j in (0..n).filter(|j| !s.contains(j)) {
            let sketch = selector(n, &[j]);
            let x1 = sc_sap_step(&pr, &sketch, &x0).unwrap();
            expected_err += weights[j] / total * pr.b_norm(&(&x1 - &x_star)).powi(2);
            expected_z += pr.projectors(&sketch).z * (weights[j] / total);
        }
        let identity = e.norm_squared() - e.dot(&(&expected_z * &e));
        assert!((expected_err - identity).abs() <= 1e-10 * e.norm_squared());
        let formula = expected_projector_diag(&a, &s).unwrap();
        assert!((expected_z - formula).norm() <= 1e-9);
    }

    #[test]
    fn block_size_bound_by_enumeration() {
        let n = 7;
        let a = random_pd(n, 500);
        let s = [3];
        let pr = FrameworkProblem::coordinate(a.clone(), DVector::zeros(n), &s, DVector::zeros(n)).unwrap();
        let weights = residual_matrix(&a, &s).diagonal().map(|v| v.max(0.0));
        let total = weights.sum();
        let z1 = expected_projector_diag(&a, &s).unwrap();
        let base = min_positive_eigenvalue(&z1);
        let free: Vec<usize> = (0..n).filter(|j| !s.contains(j)).collect();
        for l in 1..=3u32 {
            let mut ez = DMatrix::zeros(n, n);
            let count = free.len().pow(l);
            for code in 0..count {
                let mut c = code;
                let mut block = Vec::new();
                let mut prob = 1.0;
                for _ in 0..l {
                    let j = free[c % free.len()];
                    c /= free.len();
                    prob *= weights[j] / total;
                    block.push(j);
                }
                ez += pr.projectors(&selector(n, &block)).z * prob;
            }
            let lhs = min_positive_eigenvalue(&ez);
            assert!(lhs >= 1.0 - (1.0 - base).powi(l as i32) - 1e-9, "l = {l}: {lhs}");
        }
    }

    #[test]
    fn without_replacement_dominance() {
        let n = 12;
        let a = random_pd(n, 600);
        let s = [0, 1];
        let pr = FrameworkProblem::coordinate(a, DVector::zeros(n), &s, DVector::zeros(n)).unwrap();
        let mut rng = substream(601, 0);
        let mut free: Vec<usize> = (2..n).collect();
        for _ in 0..20 {
            free.shuffle(&mut rng);
            let small = &free[..3];
            let big = &free[..6];
            let diff = pr.projectors(&selector(n, big)).z - pr.projectors(&selector(n, small)).z;
            assert!(sym_eigenvalues(&diff).min() >= -1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn projectors_idempotent(seed in 0u64..10_000, d in 0usize..4, k in 1usize..4) {
            let pr = random_problem(8, 8, d, seed);
            let s = gaussian(k, 8, seed ^ 0x55);
            let pair = pr.projectors(&s);
            prop_assert!(is_projector(&pair.p, 1e-10));
            prop_assert!(is_projector(&pair.z, 1e-10));
            prop_assert!((&pair.z * &pair.p - &pair.z).norm() <= 1e-10);
        }
    }
}
