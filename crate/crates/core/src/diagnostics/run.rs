//! The compute and trace jobs.

use std::fmt::Write as _;

use serde::Serialize;

use super::{format_scalar, scalar_base_mean, spd_base_mean, JobConfig, JobError};
use crate::engine::{extend_tower, power_converge, ConvergenceReport, MeanSpec, MetricSpace};
use crate::linalg::{OrderInterval, SpdMatrix};
use crate::scalar::working_interval;

/// One row of a diameter trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub diameter: f64,
    /// k·ρⁿ·Δ₀ when the iterated k-mean declares a constant ρ.
    pub bound: Option<f64>,
}

/// Result of computing an n-mean through its tower.
#[derive(Debug, Clone)]
pub struct ComputeOutcome<P> {
    pub value: P,
    /// Power iteration of the (n−1)-mean on the inputs. For n = 2 the base
    /// mean is evaluated directly and the report has no steps.
    pub report: ConvergenceReport<P>,
    /// Arity of the mean whose barycentric iteration produced the report.
    pub iterated_arity: usize,
    pub rho: Option<f64>,
}

impl<P> ComputeOutcome<P> {
    pub fn trace(&self) -> Vec<TraceRecord> {
        let d0 = self.report.diameter_trace[0];
        let rho = self.rho;
        self.report
            .diameter_trace
            .iter()
            .enumerate()
            .map(|(n, &diameter)| TraceRecord {
                iteration: n,
                diameter,
                bound: rho.map(|r| self.iterated_arity as f64 * r.powi(n as i32) * d0),
            })
            .collect()
    }

    pub fn ensure_converged(&self) -> Result<(), JobError> {
        if self.report.converged {
            Ok(())
        } else {
            Err(JobError::NotConverged(format!(
                "no convergence after {} iterations (last diameter {:e}, tolerance {:e})",
                self.report.iterations,
                self.report.final_diameter(),
                self.report.tolerance
            )))
        }
    }

    /// `# `-prefixed summary of the run.
    pub fn summary_lines(&self) -> String {
        let mut out = format!(
            "# converged={} iterations={} final_diameter={:e} effective_tol={:e}\n# diameters:",
            self.report.converged,
            self.report.iterations,
            self.report.final_diameter(),
            self.report.tolerance
        );
        for d in &self.report.diameter_trace {
            let _ = write!(out, " {d:e}");
        }
        out.push('\n');
        out
    }
}

/// CSV with columns iteration, diameter, bound; the bound is empty when no
/// constant is declared.
pub fn trace_csv(records: &[TraceRecord]) -> String {
    let mut out = String::from("iteration,diameter,bound\n");
    for r in records {
        let bound = r.bound.map(format_scalar).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", r.iteration, format_scalar(r.diameter), bound);
    }
    out
}

fn compute<S: MetricSpace>(
    base: &MeanSpec<S>,
    inputs: &[S::Point],
    cfg: &JobConfig,
) -> Result<ComputeOutcome<S::Point>, JobError> {
    let opts = cfg.converge_options();
    if cfg.arity == base.arity() {
        let value = base.evaluate(inputs)?;
        let report = ConvergenceReport {
            iterations: 0,
            diameter_trace: vec![base.space().diameter(inputs)],
            limit: value.clone(),
            converged: true,
            tolerance: opts.tolerance,
        };
        return Ok(ComputeOutcome {
            value,
            report,
            iterated_arity: base.arity(),
            rho: None,
        });
    }
    let iterated = if cfg.arity == base.arity() + 1 {
        base.clone()
    } else {
        let mut levels = extend_tower(base, cfg.arity, opts)?;
        levels.truncate(levels.len() - 1);
        levels.pop().expect("tower spans at least two levels")
    };
    let report = power_converge(&iterated, inputs, opts)?;
    Ok(ComputeOutcome {
        value: report.limit.clone(),
        report,
        iterated_arity: iterated.arity(),
        rho: iterated.declared_rho(),
    })
}

fn check_count(cfg: &JobConfig, got: usize) -> Result<(), JobError> {
    if got != cfg.arity {
        return Err(JobError::Shape(format!(
            "expected {} inputs for arity {}, got {got}",
            cfg.arity, cfg.arity
        )));
    }
    Ok(())
}

/// Computes the `cfg.arity`-mean of scalar inputs. The interval used for
/// contraction constants is `cfg.interval_n` or the smallest [1/n, n]
/// holding the inputs.
pub fn compute_scalar(cfg: &JobConfig, inputs: &[f64]) -> Result<ComputeOutcome<f64>, JobError> {
    cfg.validate()?;
    check_count(cfg, inputs.len())?;
    let positive = inputs.iter().all(|&x| x > 0.0 && x.is_finite());
    let n = cfg.interval_n.or_else(|| positive.then(|| working_interval(inputs)));
    let base = scalar_base_mean(&cfg.mean_name()?, n)?;
    compute(&base, inputs, cfg)
}

/// Computes the `cfg.arity`-mean of matrix inputs. Certificates are taken
/// on `cfg.interval_n` or the smallest order interval holding the inputs.
pub fn compute_spd(cfg: &JobConfig, inputs: &[SpdMatrix]) -> Result<ComputeOutcome<SpdMatrix>, JobError> {
    cfg.validate()?;
    check_count(cfg, inputs.len())?;
    let dim = inputs[0].dim();
    if let Some(bad) = inputs.iter().position(|m| m.dim() != dim) {
        return Err(JobError::Shape(format!(
            "input {bad} is {0}x{0} but input 0 is {dim}x{dim}",
            inputs[bad].dim()
        )));
    }
    let interval = cfg.interval()?.unwrap_or_else(|| OrderInterval::enclosing(inputs));
    let base = spd_base_mean(&cfg.mean_name()?, Some(interval), dim, cfg.seed)?;
    compute(&base, inputs, cfg)
}
