//! Kernel ridge regression: dataset ingestion, standardization and solver
//! dispatch for `(K + λI)·x = y` with a lazy Gaussian kernel.

use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines::{block_rcd_solve, cg_solve, nystrom_pcg_solve, KrylovOptions};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::{read_numeric_csv, GaussianKernel};
use crate::nystrom::best_of_t;
use crate::rng::{substream, STREAM_DATA};
use crate::scrcd::{self, SolveOptions};
use crate::trace::ConvergenceTrace;

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    /// Rows in the source before subsampling.
    pub total_rows: usize,
    /// Source row indices kept, in file order.
    pub rows: Vec<usize>,
    pub feature_columns: Vec<String>,
    pub target_column: String,
}

/// Feature table (row-major `m × p`) with regression targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub m: usize,
    pub p: usize,
    pub targets: DVector<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(features: Vec<f64>, m: usize, p: usize, targets: DVector<f64>, provenance: Provenance) -> Result<Self> {
        if features.len() != m * p {
            return Err(Error::DimensionMismatch { what: "feature table length", expected: m * p, got: features.len() });
        }
        if targets.len() != m {
            return Err(Error::DimensionMismatch { what: "targets", expected: m, got: targets.len() });
        }
        if m < 2 {
            return Err(Error::InvalidParameter(format!("dataset needs at least 2 rows, got {m}")));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Self { features, m, p, targets, provenance })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }
}

/// Loads a numeric CSV, using `target_column` (a header name, or a 0-based
/// index for headerless files) as targets and every other column as a
/// feature. When `max_rows` is below the row count, a uniform subsample
/// without replacement is drawn from `substream(seed, STREAM_DATA)`.
pub fn load_table(path: &Path, target_column: &str, max_rows: Option<usize>, seed: u64) -> Result<Dataset> {
    let table = read_numeric_csv(path)?;
    let target = table
        .column_index(target_column)
        .or_else(|| {
            if table.header.is_none() {
                target_column.parse::<usize>().ok().filter(|&c| c < table.cols)
            } else {
                None
            }
        })
        .ok_or_else(|| Error::parse(path, format!("target column `{target_column}` not found")))?;
    let names: Vec<String> = match &table.header {
        Some(h) => h.clone(),
        None => (0..table.cols).map(|c| c.to_string()).collect(),
    };
    let rows: Vec<usize> = match max_rows {
        Some(k) if k < table.rows => {
            let mut idx = rand::seq::index::sample(&mut substream(seed, STREAM_DATA), table.rows, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..table.rows).collect(),
    };
    let p = table.cols - 1;
    let mut features = Vec::with_capacity(rows.len() * p);
    let mut targets = Vec::with_capacity(rows.len());
    for &i in &rows {
        let row = table.row(i);
        targets.push(row[target]);
        features.extend(row.iter().enumerate().filter(|&(c, _)| c != target).map(|(_, &v)| v));
    }
    let provenance = Provenance {
        source: path.display().to_string(),
        total_rows: table.rows,
        feature_columns: names.iter().enumerate().filter(|&(c, _)| c != target).map(|(_, n)| n.clone()).collect(),
        target_column: names[target].clone(),
        rows,
    };
    let m = targets.len();
    Dataset::new(features, m, p, DVector::from_vec(targets), provenance)
}

/// Per-feature zero mean and unit (population) variance. Constant features
/// are only centered; targets are left untouched.
pub fn standardize(ds: &Dataset) -> Dataset {
    let (m, p) = (ds.m, ds.p);
    let mut out = ds.clone();
    for c in 0..p {
        let mean = (0..m).map(|i| ds.features[i * p + c]).sum::<f64>() / m as f64;
        let var = (0..m).map(|i| (ds.features[i * p + c] - mean).powi(2)).sum::<f64>() / m as f64;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..m {
            out.features[i * p + c] = (ds.features[i * p + c] - mean) / scale;
        }
    }
    out
}

/// Gaussian blobs: `centers` cluster centers drawn with standard deviation
/// `spread`, points with unit noise around them, and smooth targets
/// `y = sin(z₁) + cos(z₂)/2 + 0.1·ε`.
pub fn synthetic_blobs(m: usize, p: usize, centers: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if centers == 0 || p == 0 {
        return Err(Error::InvalidParameter("blob data needs at least one center and one feature".into()));
    }
    let mut rng = substream(seed, STREAM_DATA);
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    let mids: Vec<f64> = (0..centers * p).map(|_| spread * normal()).collect();
    let mut features = Vec::with_capacity(m * p);
    let mut targets = Vec::with_capacity(m);
    for i in 0..m {
        let k = i % centers;
        let start = features.len();
        features.extend((0..p).map(|c| mids[k * p + c] + normal()));
        let z = &features[start..];
        let second = if p > 1 { z[1] } else { 0.0 };
        targets.push(z[0].sin() + 0.5 * second.cos() + 0.1 * normal());
    }
    let provenance = Provenance {
        source: format!("synthetic_blobs(m={m}, p={p}, centers={centers}, spread={spread}, seed={seed})"),
        total_rows: m,
        rows: (0..m).collect(),
        feature_columns: (0..p).map(|c| format!("z{c}")).collect(),
        target_column: "y".into(),
    };
    Dataset::new(features, m, p, DVector::from_vec(targets), provenance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KrrMethod {
    Scrcd,
    Rcd,
    Cg,
    Pcg,
}

impl KrrMethod {
    pub fn name(self) -> &'static str {
        match self {
            KrrMethod::Scrcd => "scrcd",
            KrrMethod::Rcd => "rcd",
            KrrMethod::Cg => "cg",
            KrrMethod::Pcg => "pcg",
        }
    }
}

/// Parameters of one KRR solve.
#[derive(Debug, Clone)]
pub struct KrrSolve {
    pub sigma: f64,
    /// Absolute ridge `λ` (not the per-row coefficient).
    pub lambda: f64,
    pub method: KrrMethod,
    /// Nyström rank for SC-RCD and PCG.
    pub rank: usize,
    /// Independent RPCholesky runs; the best is kept.
    pub boost: usize,
    pub options: SolveOptions,
}

/// `K + λI` for the dataset's features.
pub fn kernel_system(ds: &Dataset, sigma: f64, lambda: f64, exec: Execution) -> Result<GaussianKernel> {
    Ok(GaussianKernel::new(ds.features.clone(), ds.m, ds.p, sigma, lambda)?.with_execution(exec))
}

/// Krylov options matching the stopping rules of `options`; one iteration is one epoch.
pub fn krylov_options(options: &SolveOptions) -> KrylovOptions {
    KrylovOptions {
        stop_tol: options.stop_tol,
        max_epochs: options.max_epochs,
        checkpoint_every: options.checkpoint_every.unwrap_or(1),
        stall_checkpoints: options.stall_checkpoints,
        record_time: options.record_time,
    }
}

/// Solves `(K + λI)·x = y` with the chosen method. RPCholesky runs draw from
/// `substream(seed, i)` for run `i`.
pub fn krr_solve(ds: &Dataset, params: &KrrSolve) -> Result<(DVector<f64>, ConvergenceTrace)> {
    let exec = params.options.execution;
    let system = kernel_system(ds, params.sigma, params.lambda, exec)?;
    let y = &ds.targets;
    let (x, mut trace) = match params.method {
        KrrMethod::Scrcd => {
            let approx = best_of_t(&system, params.rank, params.boost.max(1), params.options.seed, exec)?;
            scrcd::solve(&system, &approx, y, &params.options)?
        }
        KrrMethod::Rcd => block_rcd_solve(&system, y, &params.options)?,
        KrrMethod::Cg => cg_solve(&system, y, &krylov_options(&params.options))?,
        KrrMethod::Pcg => {
            if !(params.lambda > 0.0) {
                return Err(Error::InvalidParameter("pcg needs a positive ridge".into()));
            }
            let kernel = system.with_ridge(0.0)?;
            let approx = best_of_t(&kernel, params.rank, params.boost.max(1), params.options.seed, exec)?;
            nystrom_pcg_solve(&system, y, &approx, params.lambda, &krylov_options(&params.options))?
        }
    };
    trace.label = format!(
        "{}(sigma={}, lambda={}, d={}, l={})",
        params.method.name(),
        params.sigma,
        params.lambda,
        params.rank,
        params.options.block_size
    );
    Ok((x, trace))
}
