//! `barymean`: n-means of positive reals and positive-definite matrices.
//!
//! Exit status: 0 success, 2 unreadable input or configuration, 3 wrong
//! number or shape of inputs, 4 no convergence, 5 I/O failure.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use barymean::diagnostics::{
    audit, compute_scalar, compute_spd, format_matrix, format_scalar, parse_matrices, parse_scalars, trace_csv,
    ComputeOutcome, JobConfig, JobError, Space, DEFAULT_SCALAR_TOLERANCE, DEFAULT_SPD_TOLERANCE,
};
use barymean::engine::DEFAULT_MAX_ITER;
use barymean::Variant;
use clap::{Args, Parser, Subcommand};

const DEFAULTS_HELP: &str = "\
Defaults:
  tolerance   1e-12 for scalar inputs, 1e-10 for spd inputs
  max-iter    10000

Means: arithmetic, geometric, harmonic, power:<a>, quasi:<f>, logarithmic,
agm, hgm, weighted:<s>, left, max. Parameters accept fractions (weighted:2/3).
Generators for quasi: identity, log, exp, square, sqrt, reciprocal.

Matrix files hold, per matrix, a line with the dimension d followed by d rows
of d numbers; matrices are separated by blank lines and lines starting with
'#' are ignored.

Exit status: 0 success, 2 parse error, 3 arity or shape mismatch,
4 no convergence, 5 I/O error.";

#[derive(Debug, Parser)]
#[command(name = "barymean", version, about = "Barycentric n-means of reals and positive-definite matrices", after_help = DEFAULTS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the n-mean of the inputs
    #[command(after_help = DEFAULTS_HELP)]
    Compute(JobArgs),
    /// Run sampled property checks and print a JSON report
    #[command(after_help = DEFAULTS_HELP)]
    Audit(JobArgs),
    /// Write the diameter trace of the top-level iteration as CSV
    #[command(after_help = DEFAULTS_HELP)]
    Trace(JobArgs),
}

#[derive(Debug, Args)]
struct JobArgs {
    /// Mean name, e.g. geometric or weighted:2/3 [default: arithmetic]
    #[arg(long)]
    mean: Option<String>,
    /// scalar or spd [default: scalar]
    #[arg(long)]
    space: Option<Space>,
    /// beta or beta_star [default: beta]
    #[arg(long)]
    variant: Option<Variant>,
    /// Number of arguments of the mean [default: 3]
    #[arg(long)]
    arity: Option<usize>,
    /// Diameter tolerance of the top-level iteration [default: 1e-12 scalar, 1e-10 spd]
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap for every level [default: 10000]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Random seed for certificates and audit samples [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Use the interval [1/n, n] (order interval for matrices) instead of
    /// the smallest one holding the inputs
    #[arg(long)]
    interval_n: Option<u32>,
    /// Audit samples per property [default: 100]
    #[arg(long)]
    samples: Option<usize>,
    /// Matrix dimension of audit samples [default: 3]
    #[arg(long)]
    dim: Option<usize>,
    /// JSON job configuration; flags given on the command line override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Read inputs from this file instead of VALUES or standard input
    #[arg(long)]
    input: Option<PathBuf>,
    /// Write the result here instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
    /// Scalar inputs
    #[arg(allow_negative_numbers = true)]
    values: Vec<String>,
}

impl JobArgs {
    fn config(&self) -> Result<JobConfig, JobError> {
        let mut cfg = match &self.config {
            Some(path) => JobConfig::from_json(&read_file(path)?)?,
            None => JobConfig::default(),
        };
        if let Some(m) = &self.mean {
            cfg.mean = m.clone();
        }
        if let Some(s) = self.space {
            cfg.space = s;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(a) = self.arity {
            cfg.arity = a;
        }
        if let Some(t) = self.tol {
            cfg.tolerance = Some(t);
        }
        if let Some(m) = self.max_iter {
            cfg.max_iter = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.interval_n {
            cfg.interval_n = Some(n);
        }
        if let Some(s) = self.samples {
            cfg.samples = s;
        }
        if let Some(d) = self.dim {
            cfg.dim = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn input_text(&self) -> Result<String, JobError> {
        if let Some(path) = &self.input {
            if !self.values.is_empty() {
                return Err(JobError::Parse(
                    "give inputs either with --input or as values, not both".into(),
                ));
            }
            return read_file(path);
        }
        if !self.values.is_empty() {
            return Ok(self.values.join(" "));
        }
        let mut text = String::new();
        io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| JobError::Io(format!("standard input: {e}")))?;
        Ok(text)
    }

    fn emit(&self, text: &str) -> Result<(), JobError> {
        match &self.output {
            Some(path) => fs::write(path, text).map_err(|e| JobError::Io(format!("{}: {e}", path.display()))),
            None => io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| JobError::Io(format!("standard output: {e}"))),
        }
    }
}

fn read_file(path: &Path) -> Result<String, JobError> {
    fs::read_to_string(path).map_err(|e| JobError::Io(format!("{}: {e}", path.display())))
}

enum Outcome {
    Scalar(ComputeOutcome<f64>),
    Spd(ComputeOutcome<barymean::linalg::SpdMatrix>),
}

fn run_compute(args: &JobArgs, cfg: &JobConfig) -> Result<Outcome, JobError> {
    let text = args.input_text()?;
    Ok(match cfg.space {
        Space::Scalar => Outcome::Scalar(compute_scalar(cfg, &parse_scalars(&text)?)?),
        Space::Spd => {
            if args.input.is_none() && !args.values.is_empty() {
                return Err(JobError::Parse(
                    "matrix inputs must come from --input or standard input".into(),
                ));
            }
            Outcome::Spd(compute_spd(cfg, &parse_matrices(&text)?)?)
        }
    })
}

fn run(cli: Cli) -> Result<(), JobError> {
    match &cli.command {
        Command::Compute(args) => {
            let cfg = args.config()?;
            let mut out = cfg.header("compute").comment_lines();
            let (summary, value, converged) = match run_compute(args, &cfg)? {
                Outcome::Scalar(o) => (o.summary_lines(), format_scalar(o.value) + "\n", o.ensure_converged()),
                Outcome::Spd(o) => (o.summary_lines(), format_matrix(&o.value), o.ensure_converged()),
            };
            converged?;
            out.push_str(&summary);
            out.push_str(&value);
            args.emit(&out)
        }
        Command::Trace(args) => {
            let cfg = args.config()?;
            let mut out = cfg.header("trace").comment_lines();
            let (records, converged) = match run_compute(args, &cfg)? {
                Outcome::Scalar(o) => (o.trace(), o.ensure_converged()),
                Outcome::Spd(o) => (o.trace(), o.ensure_converged()),
            };
            out.push_str(&format!("# converged={}\n", converged.is_ok()));
            out.push_str(&trace_csv(&records));
            args.emit(&out)?;
            converged
        }
        Command::Audit(args) => {
            let cfg = args.config()?;
            let report = audit(&cfg)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| JobError::Io(e.to_string()))?;
            args.emit(&(json + "\n"))
        }
    }
}

fn main() -> ExitCode {
    debug_assert_eq!(DEFAULT_SCALAR_TOLERANCE, 1e-12);
    debug_assert_eq!(DEFAULT_SPD_TOLERANCE, 1e-10);
    debug_assert_eq!(DEFAULT_MAX_ITER, 10_000);
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("barymean: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
