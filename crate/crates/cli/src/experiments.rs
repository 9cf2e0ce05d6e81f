//! Experiment runners. Each builds its problem instance from the resolved
//! config, runs the configured solvers and writes traces, spectra and a
//! summary into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::json;

use scrcd_core::baselines::{block_rcd_solve, cg_solve, nystrom_pcg_solve, PreconditionerNystrom};
use scrcd_core::dense::{sym_eigenvalues, symmetrize};
use scrcd_core::krr::{krr_solve, krylov_options, load_table, standardize, synthetic_blobs, KrrMethod, KrrSolve};
use scrcd_core::least_squares::{ls_solve, randomly_pivoted_qr};
use scrcd_core::matrix::{flat_tail_spectrum, synth_spectrum_source, DenseMatrix};
use scrcd_core::rates::{scrcd_contraction, scrk_contraction, ContractionEstimate};
use scrcd_core::rng::{substream, SolverRng, STREAM_DATA, STREAM_MATRIX, STREAM_NYSTROM};
use scrcd_core::sketch_project::rate_bounds;
use scrcd_core::trace::ConvergenceTrace;
use scrcd_core::{best_of_t, scrcd, Execution, NystromApproximation, SamplingMode, SolverSummary};

use crate::config::{ExperimentConfig, ExperimentKind, Method, SolverConfig};

const SUMMARY_FILE: &str = "summary.json";
const SPECTRUM_FILE: &str = "spectrum.csv";

/// Artifacts of one experiment.
struct Output {
    dir: PathBuf,
    solvers: Vec<SolverSummary>,
    spectrum: Vec<(&'static str, Vec<f64>)>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_owned(), solvers: Vec::new(), spectrum: Vec::new() })
    }

    fn record(&mut self, index: usize, solver: &SolverConfig, seed: u64, trace: &ConvergenceTrace) -> Result<()> {
        let file = format!("{index}_{}.csv", solver.method.name());
        trace.write_csv(self.dir.join(&file))?;
        let options = serde_json::to_value(solver)?;
        self.solvers.push(SolverSummary::from_trace(trace.label.clone(), trace, seed, options, file));
        Ok(())
    }

    fn write_spectrum(&self) -> Result<Option<String>> {
        if self.spectrum.is_empty() {
            return Ok(None);
        }
        let mut text = String::from("index,matrix,eigenvalue\n");
        for (name, values) in &self.spectrum {
            for (i, v) in values.iter().enumerate() {
                text.push_str(&format!("{},{name},{v}\n", i + 1));
            }
        }
        let path = self.dir.join(SPECTRUM_FILE);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(Some(SPECTRUM_FILE.to_owned()))
    }

    fn finish(self, config: &ExperimentConfig, extra: Option<(&str, serde_json::Value)>) -> Result<PathBuf> {
        let spectrum = self.write_spectrum()?;
        let mut summary = json!({
            "experiment": config.experiment.map(|k| k.name()),
            "config": config,
            "seed": config.seed,
            "solvers": self.solvers,
            "spectrum_path": spectrum,
        });
        if let Some((key, value)) = extra {
            summary[key] = value;
        }
        let path = self.dir.join(SUMMARY_FILE);
        fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn gaussian_vector(n: usize, rng: &mut SolverRng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_matrix(r: usize, c: usize, rng: &mut SolverRng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn descending(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn residual_spectrum(a: &DMatrix<f64>, approx: &NystromApproximation) -> Vec<f64> {
    let residual = symmetrize(&(a - approx.factor() * approx.factor().transpose()));
    sym_eigenvalues(&residual).iter().copied().collect()
}

/// `λ·M^{-1/2}·A·M^{-1/2}` for the Nyström preconditioner `M = FFᵀ + λI`.
fn preconditioned_spectrum(a: &DMatrix<f64>, precond: &PreconditionerNystrom) -> Vec<f64> {
    let root = precond.inverse_sqrt_dense();
    let m = symmetrize(&(&root * a * &root)) * precond.lambda();
    sym_eigenvalues(&m).iter().copied().collect()
}

/// Default pcg shift when the system has no ridge: the smallest eigenvalue
/// of the Nyström approximation, `λ_min(FᵀF)`.
fn nystrom_floor(approx: &NystromApproximation) -> f64 {
    let f = approx.factor();
    sym_eigenvalues(&f.tr_mul(f)).iter().copied().fold(f64::INFINITY, f64::min)
}

/// Flat-tail synthetic psd system `A = U·diag(λ)·Uᵀ` with Gaussian `b`.
pub fn synth(config: &mut ExperimentConfig) -> Result<PathBuf> {
    let p = &config.problem;
    let n = p.n.expect("resolved");
    config.validate_for(n)?;
    let seed = config.seed;
    let eigenvalues = flat_tail_spectrum(n, config.problem.r, config.problem.decay);
    let a = synth_spectrum_source(&eigenvalues, seed)?;
    let b = gaussian_vector(n, &mut substream(seed, STREAM_DATA));
    let mut out = Output::new(&config.output_dir)?;
    let spectrum = config.problem.spectrum;
    if spectrum {
        out.spectrum.push(("A", descending(eigenvalues.clone())));
    }
    let exec = Execution::default();
    let (mut residual_done, mut precond_done) = (false, false);
    for (i, s) in config.solvers().iter().enumerate() {
        let opts = s.options(seed);
        let trace = match s.method {
            Method::Scrcd => {
                let approx = best_of_t(&a, s.rank(), s.boost, seed, exec)?;
                if spectrum && !residual_done {
                    out.spectrum.push(("A_residual", descending(residual_spectrum(a.as_matrix(), &approx))));
                    residual_done = true;
                }
                scrcd::solve(&a, &approx, &b, &opts)?.1
            }
            Method::Rcd => block_rcd_solve(&a, &b, &opts)?.1,
            Method::Cg => cg_solve(&a, &b, &krylov_options(&opts))?.1,
            Method::Pcg => {
                let approx = best_of_t(&a, s.rank(), s.boost, seed, exec)?;
                let shift = s.shift.unwrap_or_else(|| nystrom_floor(&approx));
                if spectrum && !precond_done {
                    let precond = PreconditionerNystrom::from_approximation(&approx, shift)?;
                    out.spectrum.push(("preconditioned", descending(preconditioned_spectrum(a.as_matrix(), &precond))));
                    precond_done = true;
                }
                nystrom_pcg_solve(&a, &b, &approx, shift, &krylov_options(&opts))?.1
            }
        };
        out.record(i, s, seed, &trace)?;
    }
    out.finish(config, None)
}

/// Gaussian-kernel ridge regression on a CSV dataset or synthetic blobs.
pub fn krr(config: &mut ExperimentConfig) -> Result<PathBuf> {
    let seed = config.seed;
    let p = config.problem.clone();
    let ds = match &p.data {
        Some(path) => load_table(path, &p.target, p.max_rows, seed)?,
        None => synthetic_blobs(p.m.expect("resolved"), 3, 5, 3.0, seed)?,
    };
    let ds = if p.standardize { standardize(&ds) } else { ds };
    config.validate_for(ds.m)?;
    let lambda = p.lambda_coeff * ds.m as f64;
    let mut out = Output::new(&config.output_dir)?;
    for (i, s) in config.solvers().iter().enumerate() {
        let method = match s.method {
            Method::Scrcd => KrrMethod::Scrcd,
            Method::Rcd => KrrMethod::Rcd,
            Method::Cg => KrrMethod::Cg,
            Method::Pcg => KrrMethod::Pcg,
        };
        let params = KrrSolve { sigma: p.sigma, lambda, method, rank: s.rank(), boost: s.boost, options: s.options(seed) };
        let (_, trace) = krr_solve(&ds, &params)?;
        out.record(i, s, seed, &trace)?;
    }
    let data = json!({ "provenance": ds.provenance, "m": ds.m, "p": ds.p, "lambda": lambda });
    out.finish(config, Some(("dataset", data)))
}

/// One measured contraction factor next to its theoretical bound.
#[derive(Debug, Clone, Serialize)]
pub struct RateCheck {
    pub method: &'static str,
    pub sampling: &'static str,
    pub block_size: usize,
    pub measured: f64,
    pub std_error: f64,
    pub trials: usize,
    pub bound: f64,
    pub within_3se: bool,
}

impl RateCheck {
    fn new(method: &'static str, sampling: &'static str, l: usize, est: ContractionEstimate, bound: f64) -> Self {
        Self {
            method,
            sampling,
            block_size: l,
            measured: est.mean,
            std_error: est.std_error,
            trials: est.trials,
            bound,
            within_3se: est.within(bound, 3.0),
        }
    }
}

/// Small random PD instance: measured one-step contractions of SC-RCD
/// (diagonal and uniform sampling) and subspace-constrained block Kaczmarz
/// against their bounds, plus any configured solver runs.
pub fn rates(config: &mut ExperimentConfig) -> Result<PathBuf> {
    let n = config.problem.n.expect("resolved");
    let seed = config.seed;
    let rc = config.rates.clone();
    if !(1..n).contains(&rc.d) {
        return Err(crate::config::ConfigError(format!("rates.d = {} must lie in 1..{n}", rc.d)).into());
    }
    if let Some(&l) = rc.blocks.iter().find(|&&l| l == 0 || l > n - rc.d) {
        return Err(crate::config::ConfigError(format!("rates block size {l} must lie in 1..={}", n - rc.d)).into());
    }
    config.validate_for(n)?;

    let mut rng = substream(seed, STREAM_MATRIX);
    let g = gaussian_matrix(n, n, &mut rng);
    let a = DenseMatrix::symmetric(&g * g.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1)?;
    let approx = scrcd_core::rpcholesky(&a, rc.d, &mut substream(seed, STREAM_NYSTROM))?;
    let exec = Execution::default();
    let mut checks = Vec::new();
    for &l in &rc.blocks {
        let bounds = rate_bounds(a.as_matrix(), approx.pivots(), l);
        for (mode, label, bound) in [
            (SamplingMode::DiagIid, "diag_iid", bounds.scrcd_rate),
            (SamplingMode::DiagNoReplace, "diag_no_replace", bounds.scrcd_rate),
            (SamplingMode::Uniform, "uniform", bounds.uniform_rate),
        ] {
            let est = scrcd_contraction(&a, &approx, l, mode, rc.trials, seed, exec)?;
            checks.push(RateCheck::new("scrcd", label, l, est, bound));
        }
        let est = scrk_contraction(a.as_matrix(), approx.pivots(), l, rc.trials, seed, exec)?;
        checks.push(RateCheck::new("scrk", "row_norm_iid", l, est, bounds.scrk_rate));
    }

    let mut out = Output::new(&config.output_dir)?;
    if config.problem.spectrum {
        out.spectrum.push(("A", descending(sym_eigenvalues(a.as_matrix()).iter().copied().collect())));
        out.spectrum.push(("A_residual", descending(residual_spectrum(a.as_matrix(), &approx))));
    }
    let x_star = gaussian_vector(n, &mut substream(seed, STREAM_DATA));
    let b = a.as_matrix() * &x_star;
    for (i, s) in config.solvers().iter().enumerate() {
        let opts = s.options(seed);
        let trace = match s.method {
            Method::Scrcd => scrcd::solve(&a, &best_of_t(&a, s.rank(), s.boost, seed, exec)?, &b, &opts)?.1,
            Method::Rcd => block_rcd_solve(&a, &b, &opts)?.1,
            Method::Cg => cg_solve(&a, &b, &krylov_options(&opts))?.1,
            Method::Pcg => {
                let approx = best_of_t(&a, s.rank(), s.boost, seed, exec)?;
                let shift = s.shift.unwrap_or_else(|| nystrom_floor(&approx));
                nystrom_pcg_solve(&a, &b, &approx, shift, &krylov_options(&opts))?.1
            }
        };
        out.record(i, s, seed, &trace)?;
    }
    let extra = json!({ "pivots": approx.pivots(), "checks": checks });
    out.finish(config, Some(("rates", extra)))
}

/// Overdetermined least squares with Gaussian `A` (m × n) and `b`.
pub fn ls(config: &mut ExperimentConfig) -> Result<PathBuf> {
    let (m, n) = (config.problem.m.expect("resolved"), config.problem.n.expect("resolved"));
    if m < n {
        return Err(crate::config::ConfigError(format!("ls needs m >= n, got m = {m}, n = {n}")).into());
    }
    config.validate_for(n)?;
    let seed = config.seed;
    let mut rng = substream(seed, STREAM_DATA);
    let a = gaussian_matrix(m, n, &mut rng);
    let b = gaussian_vector(m, &mut rng);
    let mut out = Output::new(&config.output_dir)?;
    for (i, s) in config.solvers().iter().enumerate() {
        let approx = randomly_pivoted_qr(&a, s.rank(), &mut substream(seed, STREAM_NYSTROM))?;
        let (_, trace) = ls_solve(&a, &b, &approx, &s.options(seed))?;
        out.record(i, s, seed, &trace)?;
    }
    out.finish(config, None)
}

pub fn run(kind: ExperimentKind, config: &mut ExperimentConfig) -> Result<PathBuf> {
    match kind {
        ExperimentKind::Synth => synth(config),
        ExperimentKind::Krr => krr(config),
        ExperimentKind::Rates => rates(config),
        ExperimentKind::Ls => ls(config),
    }
}
