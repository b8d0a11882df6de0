//! Job descriptions, the mean registry, data formats, traces and audits
//! behind the `barymean` command-line tool.

mod audit;
mod format;
mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ConvergeOptions, MeanSpec, Variant, DEFAULT_MAX_ITER};
use crate::error::{LinalgError, MeanError};
use crate::iterated::{
    compose, scalar_agm_mean, scalar_hgm_mean, scalar_logarithmic_mean, CompositionKind, CompositionOptions,
};
use crate::linalg::{OrderInterval, SpdSpace};
use crate::opmeans::{op_left_trivial_mean, OperatorMeanSpec};
use crate::scalar::{self, interval_rho_power, QuasiArithmetic, ScalarMetric, ScalarSpace};

pub use audit::{audit, AuditReport, AuditResult, AUDIT_SLACK};
pub use format::{
    format_matrices, format_matrix, format_scalar, format_scalars, matrix_json, parse_matrices, parse_matrix_file,
    parse_scalars,
};
pub use run::{compute_scalar, compute_spd, trace_csv, ComputeOutcome, TraceRecord};

pub const DEFAULT_SCALAR_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_SPD_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_DIM: usize = 3;
/// Random triples used to certify an interval contraction constant.
pub const CERTIFICATION_SAMPLES: usize = 200;

/// Failure of a job, classified by the exit status it maps to.
#[derive(Debug, Error)]
pub enum JobError {
    /// Malformed or invalid input, configuration or mean name.
    #[error("{0}")]
    Parse(String),
    /// Wrong number of inputs or incompatible dimensions.
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Io(String),
}

impl JobError {
    pub fn exit_code(&self) -> i32 {
        match self {
            JobError::Parse(_) => 2,
            JobError::Shape(_) => 3,
            JobError::NotConverged(_) => 4,
            JobError::Io(_) => 5,
        }
    }
}

impl From<MeanError> for JobError {
    fn from(e: MeanError) -> Self {
        let msg = e.to_string();
        match e {
            MeanError::Arity { .. } | MeanError::Linalg(LinalgError::Shape { .. }) => JobError::Shape(msg),
            MeanError::NotConverged(_)
            | MeanError::CompositionNotConverged { .. }
            | MeanError::Linalg(LinalgError::Numeric(_)) => JobError::NotConverged(msg),
            MeanError::InvalidParameter(_) | MeanError::Domain(_) | MeanError::Linalg(_) => JobError::Parse(msg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    #[default]
    Scalar,
    Spd,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Space::Scalar => "scalar",
            Space::Spd => "spd",
        })
    }
}

impl FromStr for Space {
    type Err = JobError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scalar" => Ok(Space::Scalar),
            "spd" => Ok(Space::Spd),
            other => Err(JobError::Parse(format!(
                "unknown space {other:?} (expected scalar or spd)"
            ))),
        }
    }
}

/// A mean selectable by name.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanName {
    Arithmetic,
    Geometric,
    Harmonic,
    Power(f64),
    Quasi(String),
    Logarithmic,
    Agm,
    Hgm,
    /// s·x + (1−s)·y
    Weighted(f64),
    /// (x, y) ↦ x, which does not contract.
    Left,
    Max,
}

fn parse_number(s: &str) -> Result<f64, JobError> {
    let bad = || JobError::Parse(format!("cannot read {s:?} as a number"));
    let v = match s.split_once('/') {
        Some((num, den)) => {
            let n: f64 = num.trim().parse().map_err(|_| bad())?;
            let d: f64 = den.trim().parse().map_err(|_| bad())?;
            n / d
        }
        None => s.trim().parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

impl FromStr for MeanName {
    type Err = JobError;

    /// Parameters follow a colon; `power` and `weighted` accept fractions
    /// such as `1/3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, param) = match s.split_once(':') {
            Some((h, p)) => (h, Some(p)),
            None => (s, None),
        };
        let need =
            || param.ok_or_else(|| JobError::Parse(format!("mean {head} needs a parameter, as in {head}:<value>")));
        let name = match head {
            "arithmetic" => MeanName::Arithmetic,
            "geometric" => MeanName::Geometric,
            "harmonic" => MeanName::Harmonic,
            "logarithmic" => MeanName::Logarithmic,
            "agm" => MeanName::Agm,
            "hgm" => MeanName::Hgm,
            "left" => MeanName::Left,
            "max" => MeanName::Max,
            "power" => MeanName::Power(parse_number(need()?)?),
            "weighted" => MeanName::Weighted(parse_number(need()?)?),
            "quasi" => {
                let f = need()?;
                QuasiArithmetic::named(f).map_err(|e| JobError::Parse(e.to_string()))?;
                MeanName::Quasi(f.to_string())
            }
            other => return Err(JobError::Parse(format!("unknown mean {other:?}"))),
        };
        if param.is_some() && !matches!(name, MeanName::Power(_) | MeanName::Weighted(_) | MeanName::Quasi(_)) {
            return Err(JobError::Parse(format!("mean {head} takes no parameter")));
        }
        Ok(name)
    }
}

impl fmt::Display for MeanName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanName::Arithmetic => f.write_str("arithmetic"),
            MeanName::Geometric => f.write_str("geometric"),
            MeanName::Harmonic => f.write_str("harmonic"),
            MeanName::Power(a) => write!(f, "power:{a}"),
            MeanName::Quasi(g) => write!(f, "quasi:{g}"),
            MeanName::Logarithmic => f.write_str("logarithmic"),
            MeanName::Agm => f.write_str("agm"),
            MeanName::Hgm => f.write_str("hgm"),
            MeanName::Weighted(s) => write!(f, "weighted:{s}"),
            MeanName::Left => f.write_str("left"),
            MeanName::Max => f.write_str("max"),
        }
    }
}

/// Everything a compute, trace or audit run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    #[serde(alias = "mean_name")]
    pub mean: String,
    pub space: Space,
    pub variant: Variant,
    #[serde(alias = "target_arity")]
    pub arity: usize,
    /// Defaults by space when absent.
    #[serde(alias = "tol")]
    pub tolerance: Option<f64>,
    pub max_iter: usize,
    pub seed: u64,
    pub interval_n: Option<u32>,
    pub samples: usize,
    /// Matrix dimension of audit samples.
    pub dim: usize,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            mean: "arithmetic".into(),
            space: Space::Scalar,
            variant: Variant::Beta,
            arity: 3,
            tolerance: None,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
            interval_n: None,
            samples: DEFAULT_SAMPLES,
            dim: DEFAULT_DIM,
        }
    }
}

impl JobConfig {
    pub fn from_json(text: &str) -> Result<Self, JobError> {
        serde_json::from_str(text).map_err(|e| JobError::Parse(format!("config: {e}")))
    }

    pub fn mean_name(&self) -> Result<MeanName, JobError> {
        self.mean.parse()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(match self.space {
            Space::Scalar => DEFAULT_SCALAR_TOLERANCE,
            Space::Spd => DEFAULT_SPD_TOLERANCE,
        })
    }

    pub fn converge_options(&self) -> ConvergeOptions {
        ConvergeOptions::new(self.tolerance())
            .max_iter(self.max_iter)
            .variant(self.variant)
    }

    pub fn interval(&self) -> Result<Option<OrderInterval>, JobError> {
        self.interval_n
            .map(|n| OrderInterval::new(n).map_err(|e| JobError::Parse(e.to_string())))
            .transpose()
    }

    pub fn validate(&self) -> Result<(), JobError> {
        self.mean_name()?;
        if self.arity < 2 {
            return Err(JobError::Parse(format!("arity must be at least 2, got {}", self.arity)));
        }
        let tol = self.tolerance();
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(JobError::Parse(format!("tolerance must be positive, got {tol}")));
        }
        if self.max_iter == 0 {
            return Err(JobError::Parse("max_iter must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(JobError::Parse("dim must be at least 1".into()));
        }
        self.interval()?;
        Ok(())
    }

    /// Header shared by every report.
    pub fn header(&self, command: &str) -> ReportHeader {
        ReportHeader {
            command: command.to_string(),
            mean: self.mean.clone(),
            space: self.space,
            variant: self.variant,
            arity: self.arity,
            tolerance: self.tolerance(),
            max_iter: self.max_iter,
            seed: self.seed,
            interval_n: self.interval_n,
            defaults: Defaults::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Defaults {
    pub scalar_tolerance: f64,
    pub spd_tolerance: f64,
    pub max_iter: usize,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            scalar_tolerance: DEFAULT_SCALAR_TOLERANCE,
            spd_tolerance: DEFAULT_SPD_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportHeader {
    pub command: String,
    pub mean: String,
    pub space: Space,
    pub variant: Variant,
    pub arity: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub interval_n: Option<u32>,
    pub defaults: Defaults,
}

impl ReportHeader {
    /// The header as `# `-prefixed comment lines.
    pub fn comment_lines(&self) -> String {
        let interval = self.interval_n.map_or_else(|| "auto".to_string(), |n| n.to_string());
        format!(
            "# barymean {} mean={} space={} variant={} arity={} tol={:e} max_iter={} seed={} interval_n={}\n\
             # defaults: scalar_tol={:e} spd_tol={:e} max_iter={}\n",
            self.command,
            self.mean,
            self.space,
            self.variant,
            self.arity,
            self.tolerance,
            self.max_iter,
            self.seed,
            interval,
            self.defaults.scalar_tolerance,
            self.defaults.spd_tolerance,
            self.defaults.max_iter,
        )
    }
}

/// Base 2-mean on the positive reals (the real line for `weighted` and
/// `quasi`). When an interval [1/n, n] is known, means whose contraction
/// constant depends on it are declared with that constant.
pub fn scalar_base_mean(name: &MeanName, interval_n: Option<u32>) -> Result<MeanSpec<ScalarSpace>, JobError> {
    let with_interval_rho = |m: MeanSpec<ScalarSpace>, alpha: f64, floor: f64| match interval_n {
        Some(n) => m.with_rho(interval_rho_power(alpha, n).max(floor)),
        None => m,
    };
    let opts = CompositionOptions::default();
    Ok(match name {
        MeanName::Arithmetic => scalar::arithmetic_mean(ScalarMetric::Absolute),
        MeanName::Geometric => scalar::geometric_mean(ScalarMetric::LogAbsolute),
        MeanName::Harmonic => with_interval_rho(scalar::harmonic_mean(ScalarMetric::LogAbsolute), -1.0, 0.0),
        MeanName::Power(alpha) => {
            with_interval_rho(scalar::power_mean(*alpha, ScalarMetric::LogAbsolute)?, *alpha, 0.0)
        }
        MeanName::Quasi(g) => scalar::quasi_arithmetic_mean(QuasiArithmetic::named(g)?, ScalarMetric::Absolute),
        MeanName::Logarithmic => with_interval_rho(scalar_logarithmic_mean(opts), 1.0, 0.5),
        MeanName::Agm => with_interval_rho(scalar_agm_mean(opts), 1.0, 0.5),
        MeanName::Hgm => with_interval_rho(scalar_hgm_mean(opts), -1.0, 0.5),
        MeanName::Weighted(s) => scalar::weighted_mean(*s)?,
        MeanName::Left => scalar::left_trivial_mean(ScalarMetric::Absolute),
        MeanName::Max => scalar::max_mean(ScalarMetric::Absolute),
    })
}

/// Base 2-mean on positive-definite matrices. Arithmetic and harmonic
/// constants, and those of compositions built on them, come from an
/// empirical certificate on `interval` at dimension `dim`; the constant is
/// left undeclared when certification fails or no interval is given.
pub fn spd_base_mean(
    name: &MeanName,
    interval: Option<OrderInterval>,
    dim: usize,
    seed: u64,
) -> Result<MeanSpec<SpdSpace>, JobError> {
    let certify = |m: OperatorMeanSpec| match interval {
        Some(iv) => m
            .clone()
            .certified_on(iv, dim, CERTIFICATION_SAMPLES, seed)
            .unwrap_or(m),
        None => m,
    };
    let opts = CompositionOptions::default();
    let geometric = OperatorMeanSpec::geometric();
    let composed = |nu: OperatorMeanSpec, kind: CompositionKind, label: &str| -> Result<MeanSpec<SpdSpace>, JobError> {
        Ok(compose(geometric.mean(), certify(nu).mean(), kind, opts)?.renamed(label))
    };
    Ok(match name {
        MeanName::Arithmetic => certify(OperatorMeanSpec::arithmetic()).into_mean(),
        MeanName::Harmonic => certify(OperatorMeanSpec::harmonic()).into_mean(),
        MeanName::Geometric => geometric.clone().into_mean(),
        MeanName::Logarithmic => composed(OperatorMeanSpec::arithmetic(), CompositionKind::Skewed, "logarithmic")?,
        MeanName::Agm => composed(OperatorMeanSpec::arithmetic(), CompositionKind::Iterated, "agm")?,
        MeanName::Hgm => composed(OperatorMeanSpec::harmonic(), CompositionKind::Iterated, "hgm")?,
        MeanName::Left => op_left_trivial_mean(),
        other => return Err(JobError::Parse(format!("mean {other} is not available for spd inputs"))),
    })
}
