//! Subspace-constrained randomized coordinate descent (SC-RCD) for psd linear
//! systems, built on randomly pivoted Cholesky Nyström approximations.
//!
//! The crate provides lazy matrix sources ([`matrix`]), the RPCholesky
//! factorization ([`nystrom`]), the SC-RCD solver ([`scrcd`]), its
//! least-squares variant ([`least_squares`]), baseline solvers
//! ([`baselines`]), a kernel ridge regression driver ([`krr`]) and a dense
//! reference implementation of subspace-constrained sketch-and-project
//! ([`sketch_project`]) used as a correctness oracle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dense;
mod driver;
pub mod error;
pub mod exec;
pub mod krr;
pub mod least_squares;
pub mod matrix;
pub mod nystrom;
pub mod rates;
pub mod rng;
pub mod scrcd;
pub mod sketch_project;
pub mod trace;

pub use error::{Error, Result};
pub use exec::Execution;
pub use matrix::{DenseMatrix, GaussianKernel, MatrixSource};
pub use nystrom::{best_of_t, rpcholesky, NystromApproximation};
pub use scrcd::{InnerMode, SamplingMode, SolveOptions, SolverState};
pub use trace::{ConvergenceTrace, SolverSummary, Status, TraceRecord};
