//! `scrcd`: benchmark command line for the SC-RCD solver library.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration. On
//! failure a JSON object `{"error": {"kind", "message"}}` is printed to stderr.

mod config;
mod experiments;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use config::{ConfigError, ExperimentConfig, ExperimentKind, Method, SolverOverrides};
use scrcd_core::SamplingMode;

#[derive(Parser)]
#[command(name = "scrcd", version, about = "SC-RCD experiments: convergence traces, spectra and rate checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flat-tail synthetic psd system: unit eigenvalues then i^{-decay}.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Matrix dimension.
        #[arg(long)]
        n: Option<usize>,
        /// Number of unit eigenvalues.
        #[arg(long)]
        r: Option<usize>,
        /// Tail eigenvalues decay as i^{-decay}.
        #[arg(long)]
        decay: Option<f64>,
    },
    /// Gaussian-kernel ridge regression on a CSV file (or synthetic blobs).
    Krr {
        #[command(flatten)]
        common: Common,
        /// Numeric CSV; every column except the target is a feature.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Target column: header name, or 0-based index for headerless files.
        #[arg(long)]
        target: Option<String>,
        /// Gaussian kernel bandwidth.
        #[arg(long)]
        sigma: Option<f64>,
        /// Ridge is lambda_coeff · m.
        #[arg(long)]
        lambda_coeff: Option<f64>,
        /// Single solver; shorthand for --methods.
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Uniform subsample of at most this many rows.
        #[arg(long)]
        max_rows: Option<usize>,
        /// Number of synthetic points when no --data is given.
        #[arg(long)]
        m: Option<usize>,
        /// Use the raw feature columns instead of z-scores.
        #[arg(long)]
        no_standardize: bool,
    },
    /// Measured one-step contraction factors against their bounds.
    Rates {
        #[command(flatten)]
        common: Common,
        /// Matrix dimension.
        #[arg(long)]
        n: Option<usize>,
        /// Pivot count of the constraint.
        #[arg(long)]
        rank: Option<usize>,
        /// Monte Carlo trials per check.
        #[arg(long)]
        trials: Option<usize>,
        /// Block sizes to check, comma separated.
        #[arg(long, value_delimiter = ',')]
        blocks: Option<Vec<usize>>,
    },
    /// Least squares with a randomly pivoted QR column approximation.
    Ls {
        #[command(flatten)]
        common: Common,
        /// Rows of the least-squares matrix.
        #[arg(long)]
        m: Option<usize>,
        /// Columns of the least-squares matrix.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Summarize every trace CSV under a directory into one CSV.
    Report {
        dir: PathBuf,
        /// Defaults to <DIR>/report.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampling {
    DiagIid,
    DiagNoReplace,
    Uniform,
}

impl From<Sampling> for SamplingMode {
    fn from(s: Sampling) -> Self {
        match s {
            Sampling::DiagIid => SamplingMode::DiagIid,
            Sampling::DiagNoReplace => SamplingMode::DiagNoReplace,
            Sampling::Uniform => SamplingMode::Uniform,
        }
    }
}

/// Flags shared by the experiment subcommands; they override the config file.
#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for traces, spectrum.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed for data, approximation and solver streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the solver list.
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Nyström rank.
    #[arg(long)]
    d: Option<usize>,
    /// Block size.
    #[arg(long)]
    l: Option<usize>,
    /// Block sampling distribution.
    #[arg(long, value_enum)]
    sampling: Option<Sampling>,
    /// Inexact block solves: inner PCG to this relative tolerance.
    #[arg(long)]
    inner_tol: Option<f64>,
    /// Independent RPCholesky runs (best kept).
    #[arg(long)]
    boost: Option<usize>,
    /// Stop once the relative residual reaches this value.
    #[arg(long)]
    stop_tol: Option<f64>,
    /// Work budget in epochs (n coordinate updates each).
    #[arg(long)]
    max_epochs: Option<f64>,
    /// Checkpoints without progress before stopping; 0 disables.
    #[arg(long)]
    stall: Option<usize>,
    /// Write zero elapsed times so traces are byte-reproducible.
    #[arg(long)]
    no_time: bool,
}

impl Common {
    fn load(&self, kind: ExperimentKind) -> anyhow::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        let overrides = SolverOverrides {
            methods: self.methods.clone(),
            d: self.d,
            block_size: self.l,
            sampling: self.sampling.map(Into::into),
            inner_tol: self.inner_tol,
            boost: self.boost,
            stop_tol: self.stop_tol,
            max_epochs: self.max_epochs,
            stall_checkpoints: self.stall,
            no_time: self.no_time,
        };
        config.apply_overrides(&overrides, kind);
        Ok(config)
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let (kind, mut config) = match cli.command {
        Command::Report { dir, out } => {
            let out = out.unwrap_or_else(|| dir.join("report.csv"));
            report::write(&dir, &out)?;
            println!("{}", out.display());
            return Ok(());
        }
        Command::Synth { common, n, r, decay } => {
            let kind = ExperimentKind::Synth;
            let mut c = common.load(kind)?;
            c.problem.n = n.or(c.problem.n);
            c.problem.r = r.unwrap_or(c.problem.r);
            c.problem.decay = decay.unwrap_or(c.problem.decay);
            (kind, c)
        }
        Command::Krr { common, data, target, sigma, lambda_coeff, method, max_rows, m, no_standardize } => {
            let kind = ExperimentKind::Krr;
            let mut common = common;
            if let Some(method) = method {
                common.methods = Some(vec![method]);
            }
            let mut c = common.load(kind)?;
            let p = &mut c.problem;
            p.data = data.or(p.data.take());
            p.target = target.unwrap_or(std::mem::take(&mut p.target));
            p.sigma = sigma.unwrap_or(p.sigma);
            p.lambda_coeff = lambda_coeff.unwrap_or(p.lambda_coeff);
            p.max_rows = max_rows.or(p.max_rows);
            p.m = m.or(p.m);
            if no_standardize {
                p.standardize = false;
            }
            (kind, c)
        }
        Command::Rates { common, n, rank, trials, blocks } => {
            let kind = ExperimentKind::Rates;
            let mut c = common.load(kind)?;
            c.problem.n = n.or(c.problem.n);
            c.rates.d = rank.unwrap_or(c.rates.d);
            c.rates.trials = trials.unwrap_or(c.rates.trials);
            c.rates.blocks = blocks.unwrap_or(std::mem::take(&mut c.rates.blocks));
            (kind, c)
        }
        Command::Ls { common, m, n } => {
            let kind = ExperimentKind::Ls;
            let mut c = common.load(kind)?;
            c.problem.m = m.or(c.problem.m);
            c.problem.n = n.or(c.problem.n);
            (kind, c)
        }
    };
    config.resolve(kind)?;
    let summary = experiments::run(kind, &mut config)?;
    println!("{}", summary.display());
    Ok(())
}

/// The error chain joined by ": ", skipping causes already spelled out by
/// the message before them.
fn describe(err: &anyhow::Error) -> String {
    let mut message = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !message.contains(&text) {
            if !message.is_empty() {
                message.push_str(": ");
            }
            message.push_str(&text);
        }
    }
    message
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = if err.downcast_ref::<ConfigError>().is_some() { ("config", 2) } else { ("runtime", 1) };
            let message = describe(&err);
            eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
            ExitCode::from(code)
        }
    }
}
