//! Iterated and skewed compositions of two 2-means.
//!
//! With x₁ = λ(x, y) and y₁ = ν(x, y), the iterated composition continues
//! with xₙ₊₁ = λ(xₙ, yₙ), yₙ₊₁ = ν(xₙ, yₙ), while the skewed one updates ν
//! first and feeds the new value to λ: yₙ₊₁ = ν(xₙ, yₙ), xₙ₊₁ = λ(xₙ, yₙ₊₁).
//! Both sequences share a limit when λ is a convex mean and ν is
//! nonexpansive.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{MeanSpec, MetricSpace, DEFAULT_MAX_ITER};
use crate::error::MeanError;
use crate::linalg::{SpdMatrix, SpdSpace};
use crate::opmeans::OperatorMeanSpec;
use crate::scalar::{self, ScalarMetric, ScalarSpace};

/// Gap at which a composition stops unless configured otherwise.
pub const DEFAULT_COMPOSITION_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionKind {
    Iterated,
    Skewed,
}

impl fmt::Display for CompositionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompositionKind::Iterated => "iterated",
            CompositionKind::Skewed => "skewed",
        })
    }
}

impl FromStr for CompositionKind {
    type Err = MeanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iterated" => Ok(CompositionKind::Iterated),
            "skewed" => Ok(CompositionKind::Skewed),
            other => Err(MeanError::InvalidParameter(format!(
                "unknown composition kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionOptions {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for CompositionOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_COMPOSITION_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl CompositionOptions {
    pub fn new(tolerance: f64, max_iter: usize) -> Self {
        Self { tolerance, max_iter }
    }

    fn validate(&self) -> Result<(), MeanError> {
        if !(self.tolerance > 0.0) || self.max_iter == 0 {
            return Err(MeanError::InvalidParameter(format!(
                "composition needs tolerance > 0 and max_iter ≥ 1, got {:e} and {}",
                self.tolerance, self.max_iter
            )));
        }
        Ok(())
    }
}

/// Record of one composition run.
#[derive(Debug, Clone)]
pub struct CompositionTrace<P> {
    /// d(xₙ, yₙ) for n = 1, 2, …
    pub gaps: Vec<f64>,
    pub iterations: usize,
    pub lambda: P,
    pub nu: P,
    pub converged: bool,
}

fn run<S: MetricSpace>(
    lambda: &MeanSpec<S>,
    nu: &MeanSpec<S>,
    kind: CompositionKind,
    x: &S::Point,
    y: &S::Point,
    opts: CompositionOptions,
    record: bool,
) -> Result<CompositionTrace<S::Point>, MeanError> {
    let space = lambda.space();
    let mut xn = lambda.evaluate(&[x.clone(), y.clone()])?;
    let mut yn = nu.evaluate(&[x.clone(), y.clone()])?;
    let mut gaps = Vec::new();
    let mut last_gap = f64::NAN;
    for n in 1..=opts.max_iter {
        let gap = space.distance(&xn, &yn);
        if !gap.is_finite() {
            return Err(MeanError::Domain(format!("composition gap became {gap}")));
        }
        if record {
            gaps.push(gap);
        } else {
            last_gap = gap;
        }
        let threshold = opts.tolerance.max(space.resolution(&xn));
        if gap <= threshold || n == opts.max_iter {
            if !record {
                gaps.push(last_gap);
            }
            return Ok(CompositionTrace {
                gaps,
                iterations: n,
                converged: gap <= threshold,
                lambda: xn,
                nu: yn,
            });
        }
        match kind {
            CompositionKind::Iterated => {
                let pair = [xn, yn];
                xn = lambda.evaluate(&pair)?;
                yn = nu.evaluate(&pair)?;
            }
            CompositionKind::Skewed => {
                yn = nu.evaluate(&[xn.clone(), yn])?;
                xn = lambda.evaluate(&[xn, yn.clone()])?;
            }
        }
    }
    unreachable!("the loop returns at n = max_iter")
}

fn check_pair<S: MetricSpace>(lambda: &MeanSpec<S>, nu: &MeanSpec<S>) -> Result<(), MeanError> {
    for m in [lambda, nu] {
        if m.arity() != 2 {
            return Err(MeanError::Arity {
                expected: 2,
                got: m.arity(),
            });
        }
    }
    if !lambda.is_symmetric() || lambda.declared_rho().is_none_or(|r| r > 0.5) {
        return Err(MeanError::InvalidParameter(format!(
            "{} is not declared a convex mean (symmetric with ρ = 1/2)",
            lambda.name()
        )));
    }
    Ok(())
}

/// Runs the composition on one pair and returns every gap, without
/// failing on exhaustion.
pub fn compose_trace<S: MetricSpace>(
    lambda: &MeanSpec<S>,
    nu: &MeanSpec<S>,
    kind: CompositionKind,
    x: &S::Point,
    y: &S::Point,
    opts: CompositionOptions,
) -> Result<CompositionTrace<S::Point>, MeanError> {
    check_pair(lambda, nu)?;
    opts.validate()?;
    run(lambda, nu, kind, x, y, opts, true)
}

/// The composed 2-mean λ∗ν or λ∗ₛν.
///
/// `lambda` must be declared convex. The result is declared ρ-contractive
/// with ρ = max(1/2, ρ_ν) when `nu` carries a constant.
pub fn compose<S: MetricSpace>(
    lambda: &MeanSpec<S>,
    nu: &MeanSpec<S>,
    kind: CompositionKind,
    opts: CompositionOptions,
) -> Result<MeanSpec<S>, MeanError> {
    check_pair(lambda, nu)?;
    opts.validate()?;
    let (l, n) = (lambda.clone(), nu.clone());
    let name = match kind {
        CompositionKind::Iterated => format!("{}*{}", lambda.name(), nu.name()),
        CompositionKind::Skewed => format!("{}*s{}", lambda.name(), nu.name()),
    };
    let symmetric = lambda.is_symmetric() && nu.is_symmetric();
    let composed = MeanSpec::new(name, lambda.space().clone(), 2, symmetric, move |p: &[S::Point]| {
        let t = run(&l, &n, kind, &p[0], &p[1], opts, false)?;
        if t.converged {
            Ok(t.lambda)
        } else {
            Err(MeanError::CompositionNotConverged {
                iterations: t.iterations,
                gap: t.gaps.last().copied().unwrap_or(f64::NAN),
            })
        }
    });
    Ok(match nu.declared_rho() {
        Some(r) => composed.with_rho(r.max(0.5)),
        None => composed,
    })
}

fn op_composition(
    name: &str,
    nu: OperatorMeanSpec,
    kind: CompositionKind,
    opts: CompositionOptions,
) -> MeanSpec<SpdSpace> {
    let g = OperatorMeanSpec::geometric();
    compose(g.mean(), nu.mean(), kind, opts)
        .expect("the geometric mean is convex")
        .renamed(name)
}

/// AGM = geometric ∗ arithmetic on positive-definite matrices.
pub fn op_agm_mean(opts: CompositionOptions) -> MeanSpec<SpdSpace> {
    op_composition("agm", OperatorMeanSpec::arithmetic(), CompositionKind::Iterated, opts)
}

/// L = geometric ∗ₛ arithmetic on positive-definite matrices.
pub fn op_logarithmic_mean(opts: CompositionOptions) -> MeanSpec<SpdSpace> {
    op_composition(
        "logarithmic",
        OperatorMeanSpec::arithmetic(),
        CompositionKind::Skewed,
        opts,
    )
}

/// HGM = geometric ∗ harmonic on positive-definite matrices.
pub fn op_hgm_mean(opts: CompositionOptions) -> MeanSpec<SpdSpace> {
    op_composition("hgm", OperatorMeanSpec::harmonic(), CompositionKind::Iterated, opts)
}

pub fn agm(a: &SpdMatrix, b: &SpdMatrix) -> Result<SpdMatrix, MeanError> {
    op_agm_mean(CompositionOptions::default()).evaluate(&[a.clone(), b.clone()])
}

pub fn logarithmic_op(a: &SpdMatrix, b: &SpdMatrix) -> Result<SpdMatrix, MeanError> {
    op_logarithmic_mean(CompositionOptions::default()).evaluate(&[a.clone(), b.clone()])
}

pub fn hgm(a: &SpdMatrix, b: &SpdMatrix) -> Result<SpdMatrix, MeanError> {
    op_hgm_mean(CompositionOptions::default()).evaluate(&[a.clone(), b.clone()])
}

fn scalar_composition(
    name: &str,
    nu: MeanSpec<ScalarSpace>,
    kind: CompositionKind,
    opts: CompositionOptions,
) -> MeanSpec<ScalarSpace> {
    let g = scalar::geometric_mean(ScalarMetric::LogAbsolute);
    compose(&g, &nu, kind, opts)
        .expect("the geometric mean is convex in the log metric")
        .renamed(name)
}

/// Scalar AGM under the log metric.
pub fn scalar_agm_mean(opts: CompositionOptions) -> MeanSpec<ScalarSpace> {
    let a = scalar::arithmetic_mean(ScalarMetric::LogAbsolute);
    scalar_composition("agm", a, CompositionKind::Iterated, opts)
}

/// Scalar logarithmic mean, obtained as a skewed composition.
pub fn scalar_logarithmic_mean(opts: CompositionOptions) -> MeanSpec<ScalarSpace> {
    let a = scalar::arithmetic_mean(ScalarMetric::LogAbsolute);
    scalar_composition("logarithmic", a, CompositionKind::Skewed, opts)
}

/// Scalar harmonic-geometric mean under the log metric.
pub fn scalar_hgm_mean(opts: CompositionOptions) -> MeanSpec<ScalarSpace> {
    let h = scalar::harmonic_mean(ScalarMetric::LogAbsolute);
    scalar_composition("hgm", h, CompositionKind::Iterated, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Gauss's iteration, written out independently of the composition code.
    fn gauss_agm(mut a: f64, mut b: f64) -> f64 {
        for _ in 0..64 {
            let (an, bn) = ((a + b) / 2.0, (a * b).sqrt());
            a = an;
            b = bn;
        }
        a
    }

    #[test]
    fn scalar_agm_matches_gauss() {
        let agm = scalar_agm_mean(CompositionOptions::default());
        let v = agm.evaluate(&[24.0, 6.0]).unwrap();
        assert_relative_eq!(v, gauss_agm(24.0, 6.0), max_relative = 1e-13);
        assert_relative_eq!(v, 13.4581714817256, max_relative = 1e-13);
    }

    #[test]
    fn skewed_gives_the_logarithmic_mean() {
        let l = scalar_logarithmic_mean(CompositionOptions::default());
        for (a, b) in [(1.0, std::f64::consts::E), (2.0, 9.0), (0.3, 0.31)] {
            let v = l.evaluate(&[a, b]).unwrap();
            assert_relative_eq!(v, scalar::logarithmic_closed_form(a, b), max_relative = 1e-12);
        }
    }

    #[test]
    fn orderings_are_not_interchangeable() {
        let g = scalar::geometric_mean(ScalarMetric::LogAbsolute);
        let a = scalar::arithmetic_mean(ScalarMetric::LogAbsolute);
        let opts = CompositionOptions::default();
        let it = compose(&g, &a, CompositionKind::Iterated, opts).unwrap();
        let sk = compose(&g, &a, CompositionKind::Skewed, opts).unwrap();
        let (x, y) = (1.0, std::f64::consts::E);
        let vi = it.evaluate(&[x, y]).unwrap();
        let vs = sk.evaluate(&[x, y]).unwrap();
        assert!((vi - vs).abs() > 0.01);
        assert_relative_eq!(vs, std::f64::consts::E - 1.0, max_relative = 1e-12);
        assert_relative_eq!(vi, gauss_agm(x, y), max_relative = 1e-12);
    }

    #[test]
    fn equal_arguments_finish_at_once() {
        let g = scalar::geometric_mean(ScalarMetric::LogAbsolute);
        let a = scalar::arithmetic_mean(ScalarMetric::LogAbsolute);
        for kind in [CompositionKind::Iterated, CompositionKind::Skewed] {
            let t = compose_trace(&g, &a, kind, &3.5, &3.5, CompositionOptions::default()).unwrap();
            assert_eq!(t.iterations, 1);
            assert_eq!(t.lambda, 3.5);
        }
        let m = SpdMatrix::from_rows(2, &[2.0, 0.4, 0.4, 1.0]).unwrap();
        assert_eq!(agm(&m, &m).unwrap(), m);
        assert_eq!(logarithmic_op(&m, &m).unwrap(), m);
        assert_eq!(hgm(&m, &m).unwrap(), m);
    }

    #[test]
    fn gaps_halve() {
        let g = scalar::geometric_mean(ScalarMetric::LogAbsolute);
        let a = scalar::arithmetic_mean(ScalarMetric::LogAbsolute);
        let t = compose_trace(
            &g,
            &a,
            CompositionKind::Iterated,
            &1.0,
            &1000.0,
            CompositionOptions::default(),
        )
        .unwrap();
        assert!(t.converged);
        for w in t.gaps.windows(2) {
            assert!(w[1] <= 0.5 * w[0] + 1e-15);
        }
    }

    #[test]
    fn rejects_non_convex_lambda_and_reports_exhaustion() {
        let a = scalar::arithmetic_mean(ScalarMetric::LogAbsolute);
        let g = scalar::geometric_mean(ScalarMetric::LogAbsolute);
        assert!(compose(&a, &g, CompositionKind::Iterated, CompositionOptions::default()).is_err());
        let short = compose(&g, &a, CompositionKind::Skewed, CompositionOptions::new(1e-13, 3)).unwrap();
        assert!(matches!(
            short.evaluate(&[1.0, 100.0]),
            Err(MeanError::CompositionNotConverged { iterations: 3, .. })
        ));
    }

    #[test]
    fn declared_rho_is_max_of_half_and_nu() {
        let g = scalar::geometric_mean(ScalarMetric::LogAbsolute);
        let nu = scalar::arithmetic_mean(ScalarMetric::LogAbsolute).with_rho(0.8);
        let m = compose(&g, &nu, CompositionKind::Iterated, CompositionOptions::default()).unwrap();
        assert_eq!(m.declared_rho(), Some(0.8));
        let m = compose(
            &g,
            &nu.clone().with_rho(0.3),
            CompositionKind::Iterated,
            CompositionOptions::default(),
        )
        .unwrap();
        assert_eq!(m.declared_rho(), Some(0.5));
        assert_eq!(scalar_agm_mean(CompositionOptions::default()).declared_rho(), None);
    }

    #[test]
    fn matrix_agm_on_commuting_diagonals() {
        let a = SpdMatrix::from_diagonal(&[24.0, 1.0]).unwrap();
        let b = SpdMatrix::from_diagonal(&[6.0, 1.0]).unwrap();
        let m = agm(&a, &b).unwrap();
        assert_relative_eq!(m.matrix()[(0, 0)], gauss_agm(24.0, 6.0), max_relative = 1e-12);
        assert_relative_eq!(m.matrix()[(1, 1)], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn one_by_one_logarithmic() {
        let a = SpdMatrix::from_diagonal(&[1.0]).unwrap();
        let b = SpdMatrix::from_diagonal(&[std::f64::consts::E]).unwrap();
        let l = logarithmic_op(&a, &b).unwrap();
        assert_relative_eq!(l.matrix()[(0, 0)], std::f64::consts::E - 1.0, max_relative = 1e-12);
    }
}
