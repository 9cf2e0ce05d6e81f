//! Experiment configuration: JSON file, command-line overrides, resolution
//! of per-experiment defaults and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scrcd_core::{InnerMode, SamplingMode, SolveOptions};

/// Invalid configuration (unknown key, bad value, inconsistent sizes).
/// Reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Synth,
    Krr,
    Rates,
    Ls,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Synth => "synth",
            ExperimentKind::Krr => "krr",
            ExperimentKind::Rates => "rates",
            ExperimentKind::Ls => "ls",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Scrcd,
    Rcd,
    Cg,
    Pcg,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Scrcd => "scrcd",
            Method::Rcd => "rcd",
            Method::Cg => "cg",
            Method::Pcg => "pcg",
        }
    }

    fn uses_rank(self) -> bool {
        matches!(self, Method::Scrcd | Method::Pcg)
    }
}

/// Problem instance. Unset sizes take per-experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    /// Matrix dimension (synth, rates) or column count (ls).
    pub n: Option<usize>,
    /// Row count (ls) or synthetic point count (krr without data).
    pub m: Option<usize>,
    /// Number of unit eigenvalues of the flat-tail spectrum.
    pub r: usize,
    /// Tail decay exponent: `λ_i = i^{-decay}` for `i > r`.
    pub decay: f64,
    pub data: Option<PathBuf>,
    pub target: String,
    pub max_rows: Option<usize>,
    pub standardize: bool,
    pub sigma: f64,
    /// Ridge coefficient; the ridge is `lambda_coeff · m`.
    pub lambda_coeff: f64,
    /// Write eigenvalue spectra (dense instances only).
    pub spectrum: bool,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            n: None,
            m: None,
            r: 50,
            decay: 1.5,
            data: None,
            target: "y".into(),
            max_rows: None,
            standardize: true,
            sigma: 3.0,
            lambda_coeff: 1e-6,
            spectrum: true,
        }
    }
}

/// One solver run. Unset `d` and `block_size` take per-experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: Method,
    /// Nyström rank (scrcd, pcg) or column-approximation rank (ls).
    pub d: Option<usize>,
    pub block_size: Option<usize>,
    pub sampling: SamplingMode,
    pub inner: InnerMode,
    /// Independent RPCholesky runs; the best is kept.
    pub boost: usize,
    pub stop_tol: f64,
    pub max_epochs: f64,
    pub checkpoint_every: Option<usize>,
    pub stall_checkpoints: usize,
    pub record_time: bool,
    /// Preconditioner shift for pcg on systems without a ridge; defaults to
    /// the smallest eigenvalue of the Nyström approximation.
    pub shift: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolveOptions::default();
        Self {
            method: Method::Scrcd,
            d: None,
            block_size: None,
            sampling: o.sampling,
            inner: o.inner,
            boost: 1,
            stop_tol: o.stop_tol,
            max_epochs: o.max_epochs,
            checkpoint_every: None,
            stall_checkpoints: o.stall_checkpoints,
            record_time: true,
            shift: None,
        }
    }
}

impl SolverConfig {
    pub fn for_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn rank(&self) -> usize {
        self.d.unwrap_or(0)
    }

    /// Solve options for this solver; call after [`ExperimentConfig::resolve`].
    pub fn options(&self, seed: u64) -> SolveOptions {
        SolveOptions {
            block_size: self.block_size.unwrap_or(1),
            sampling: self.sampling,
            inner: self.inner,
            stop_tol: self.stop_tol,
            max_epochs: self.max_epochs,
            checkpoint_every: self.checkpoint_every,
            stall_checkpoints: self.stall_checkpoints,
            seed,
            record_time: self.record_time,
            ..SolveOptions::default()
        }
    }
}

/// Monte Carlo rate verification settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesConfig {
    pub d: usize,
    pub blocks: Vec<usize>,
    pub trials: usize,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self { d: 6, blocks: vec![1, 2, 4], trials: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Must match the subcommand when present.
    pub experiment: Option<ExperimentKind>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub problem: ProblemConfig,
    /// Unset means the experiment's default solver list.
    pub solvers: Option<Vec<SolverConfig>>,
    pub rates: RatesConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            output_dir: PathBuf::from("results"),
            problem: ProblemConfig::default(),
            solvers: None,
            rates: RatesConfig::default(),
        }
    }
}

/// Overrides applied to every solver.
#[derive(Debug, Clone, Default)]
pub struct SolverOverrides {
    pub methods: Option<Vec<Method>>,
    pub d: Option<usize>,
    pub block_size: Option<usize>,
    pub sampling: Option<SamplingMode>,
    pub inner_tol: Option<f64>,
    pub boost: Option<usize>,
    pub stop_tol: Option<f64>,
    pub max_epochs: Option<f64>,
    pub stall_checkpoints: Option<usize>,
    pub no_time: bool,
}

impl ExperimentConfig {
    /// Parses a JSON config; unknown keys are rejected with their name.
    pub fn from_json(text: &str, origin: &Path) -> anyhow::Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text, path)
    }

    /// Applies solver flags; `--methods` replaces the solver list.
    pub fn apply_overrides(&mut self, o: &SolverOverrides, kind: ExperimentKind) {
        if let Some(methods) = &o.methods {
            self.solvers = Some(methods.iter().map(|&m| SolverConfig::for_method(m)).collect());
        }
        let solvers = self.solvers.get_or_insert_with(|| default_solvers(kind));
        for s in solvers {
            if let Some(d) = o.d {
                s.d = Some(d);
            }
            if let Some(l) = o.block_size {
                s.block_size = Some(l);
            }
            if let Some(mode) = o.sampling {
                s.sampling = mode;
            }
            if let Some(rel_tol) = o.inner_tol {
                s.inner = InnerMode::Pcg { rel_tol };
            }
            if let Some(t) = o.boost {
                s.boost = t;
            }
            if let Some(tol) = o.stop_tol {
                s.stop_tol = tol;
            }
            if let Some(e) = o.max_epochs {
                s.max_epochs = e;
            }
            if let Some(k) = o.stall_checkpoints {
                s.stall_checkpoints = k;
            }
            if o.no_time {
                s.record_time = false;
            }
        }
    }

    /// Fills per-experiment defaults and checks everything that does not
    /// depend on a loaded dataset.
    pub fn resolve(&mut self, kind: ExperimentKind) -> anyhow::Result<()> {
        if let Some(declared) = self.experiment {
            if declared != kind {
                return Err(invalid(format!(
                    "config declares experiment \"{}\" but the subcommand is \"{}\"",
                    declared.name(),
                    kind.name()
                )));
            }
        }
        self.experiment = Some(kind);
        let p = &mut self.problem;
        match kind {
            ExperimentKind::Synth => {
                p.n.get_or_insert(1024);
            }
            ExperimentKind::Rates => {
                p.n.get_or_insert(32);
            }
            ExperimentKind::Ls => {
                p.n.get_or_insert(50);
                p.m.get_or_insert(200);
            }
            ExperimentKind::Krr => {
                if p.data.is_none() {
                    p.m.get_or_insert(500);
                }
            }
        }
        if !(p.sigma > 0.0 && p.sigma.is_finite()) {
            return Err(invalid(format!("problem.sigma must be positive, got {}", p.sigma)));
        }
        if !(p.lambda_coeff >= 0.0 && p.lambda_coeff.is_finite()) {
            return Err(invalid(format!("problem.lambda_coeff must be nonnegative, got {}", p.lambda_coeff)));
        }
        if !(p.decay > 0.0 && p.decay.is_finite()) {
            return Err(invalid(format!("problem.decay must be positive, got {}", p.decay)));
        }
        if p.n == Some(0) || p.m == Some(0) || p.max_rows == Some(0) {
            return Err(invalid("problem sizes must be positive"));
        }
        if kind == ExperimentKind::Synth && p.r > p.n.unwrap_or(0) {
            return Err(invalid(format!("problem.r = {} exceeds n = {}", p.r, p.n.unwrap_or(0))));
        }
        if kind == ExperimentKind::Rates {
            if self.rates.trials < 2 {
                return Err(invalid("rates.trials must be at least 2"));
            }
            if self.rates.blocks.is_empty() {
                return Err(invalid("rates.blocks must not be empty"));
            }
        }

        let size = self.problem.n.or(self.problem.m);
        let solvers = self.solvers.get_or_insert_with(|| default_solvers(kind));
        for (i, s) in solvers.iter_mut().enumerate() {
            if kind == ExperimentKind::Ls && s.method != Method::Scrcd {
                return Err(invalid(format!("solvers[{i}]: the ls experiment supports only method \"scrcd\"")));
            }
            if s.boost == 0 {
                return Err(invalid(format!("solvers[{i}]: boost must be at least 1")));
            }
            if let Some(n) = size {
                let d = *s.d.get_or_insert_with(|| default_rank(n));
                s.block_size.get_or_insert(d.max(1));
            }
        }
        Ok(())
    }

    /// Size checks once the system dimension `n` is known.
    pub fn validate_for(&mut self, n: usize) -> anyhow::Result<()> {
        let seed = self.seed;
        for (i, s) in self.solvers.get_or_insert_with(Vec::new).iter_mut().enumerate() {
            let d = *s.d.get_or_insert_with(|| default_rank(n));
            s.block_size.get_or_insert(d.max(1));
            let pivots = if s.method == Method::Scrcd { d } else { 0 };
            if s.method.uses_rank() && !(1..=n).contains(&d) {
                return Err(invalid(format!("solvers[{i}]: d = {d} must lie in 1..={n}")));
            }
            if let Some(shift) = s.shift {
                if shift.is_nan() || shift <= 0.0 {
                    return Err(invalid(format!("solvers[{i}]: shift must be positive")));
                }
            }
            s.options(seed)
                .validate(n, pivots)
                .map_err(|e| invalid(format!("solvers[{i}] ({}): {e}", s.method.name())))?;
        }
        Ok(())
    }

    pub fn solvers(&self) -> &[SolverConfig] {
        self.solvers.as_deref().unwrap_or(&[])
    }
}

/// Nyström rank and block size when none is given: `⌈4√n⌉`, capped at `n/2`.
pub fn default_rank(n: usize) -> usize {
    ((4.0 * (n as f64).sqrt()).ceil() as usize).min(n / 2).max(1)
}

fn default_solvers(kind: ExperimentKind) -> Vec<SolverConfig> {
    let methods: &[Method] = match kind {
        ExperimentKind::Synth => &[Method::Scrcd, Method::Rcd, Method::Cg],
        ExperimentKind::Krr => &[Method::Scrcd, Method::Cg, Method::Pcg],
        ExperimentKind::Ls => &[Method::Scrcd],
        ExperimentKind::Rates => &[],
    };
    let mut out: Vec<SolverConfig> = methods.iter().map(|&m| SolverConfig::for_method(m)).collect();
    if kind == ExperimentKind::Ls {
        out[0].d = Some(10);
        out[0].block_size = Some(10);
    }
    out
}
