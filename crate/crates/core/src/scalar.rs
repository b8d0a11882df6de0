//! Two-variable means on the positive reals.
//!
//! Each mean comes both as a plain function and as a [`MeanSpec`] over a
//! [`ScalarSpace`], so it can seed the extension engine or serve as a
//! closed-form oracle for it.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{MeanSpec, MetricSpace};
use crate::error::MeanError;

/// A strictly positive real number.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PositiveReal(f64);

impl PositiveReal {
    pub fn new(value: f64) -> Result<Self, MeanError> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(MeanError::Domain(format!("{value} is not a positive real")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<PositiveReal> for f64 {
    fn from(p: PositiveReal) -> f64 {
        p.0
    }
}

/// Metric on the (positive) reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarMetric {
    /// |x − y|
    Absolute,
    /// |log x − log y|, the one-dimensional Thompson metric.
    LogAbsolute,
}

/// The reals under a [`ScalarMetric`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarSpace {
    pub metric: ScalarMetric,
}

impl ScalarSpace {
    pub fn absolute() -> Arc<Self> {
        Arc::new(Self {
            metric: ScalarMetric::Absolute,
        })
    }

    pub fn log() -> Arc<Self> {
        Arc::new(Self {
            metric: ScalarMetric::LogAbsolute,
        })
    }
}

impl MetricSpace for ScalarSpace {
    type Point = f64;

    fn distance(&self, a: &f64, b: &f64) -> f64 {
        match self.metric {
            ScalarMetric::Absolute => (a - b).abs(),
            ScalarMetric::LogAbsolute => (a.ln() - b.ln()).abs(),
        }
    }

    fn resolution(&self, x: &f64) -> f64 {
        match self.metric {
            ScalarMetric::Absolute => 16.0 * f64::EPSILON * x.abs(),
            ScalarMetric::LogAbsolute => 16.0 * f64::EPSILON,
        }
    }

    fn diameter(&self, points: &[f64]) -> f64 {
        let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
        if points.len() < 2 {
            0.0
        } else {
            self.distance(&lo, &hi)
        }
    }

    fn distance_over(&self, points: &[f64], bound: f64) -> Option<f64> {
        let d = self.diameter(points);
        (!(d <= bound)).then_some(d)
    }
}

pub fn arithmetic(x: f64, y: f64) -> f64 {
    0.5 * (x + y)
}

pub fn geometric(x: f64, y: f64) -> f64 {
    (x * y).sqrt()
}

pub fn harmonic(x: f64, y: f64) -> f64 {
    2.0 * x * y / (x + y)
}

/// Logarithmic mean (b − a)/(log b − log a), continuously extended by a at
/// a = b.
pub fn logarithmic_closed_form(a: f64, b: f64) -> f64 {
    let u = (b / a).ln();
    if u.abs() < 1e-6 {
        // a·(e^u − 1)/u
        a * (1.0 + u / 2.0 + u * u / 6.0 + u * u * u / 24.0)
    } else {
        a * u.exp_m1() / u
    }
}

/// Smallest integer n with every value inside [1/n, n].
pub fn working_interval(values: &[f64]) -> u32 {
    let spread = values.iter().fold(1.0f64, |acc, &x| acc.max(x).max(1.0 / x));
    (spread * (1.0 - 4.0 * f64::EPSILON)).ceil().max(1.0) as u32
}

/// Coordinatewise contraction constant, under the log metric on [1/n, n],
/// of the power mean with exponent `alpha` (arithmetic at 1, harmonic at −1).
///
/// The partial derivative of log M with respect to log y is
/// y^α/(x^α + y^α), whose supremum over the interval is n^{2|α|}/(n^{2|α|}+1).
pub fn interval_rho_power(alpha: f64, n: u32) -> f64 {
    let t = (n as f64).powf(2.0 * alpha.abs());
    t / (t + 1.0)
}

/// The affine mean s·x + (1−s)·y on the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedAffine {
    s: f64,
}

impl WeightedAffine {
    pub fn new(s: f64) -> Result<Self, MeanError> {
        if s > 0.0 && s < 1.0 {
            Ok(Self { s })
        } else {
            Err(MeanError::InvalidParameter(format!("weight {s} is outside (0, 1)")))
        }
    }

    pub fn weight(&self) -> f64 {
        self.s
    }

    pub fn apply(&self, x: f64, y: f64) -> f64 {
        self.s * x + (1.0 - self.s) * y
    }

    /// max{s, 1−s}, valid on all of ℝ under the absolute metric.
    pub fn rho(&self) -> f64 {
        self.s.max(1.0 - self.s)
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Strictly monotone generator of a quasi-arithmetic mean f⁻¹((f(x)+f(y))/2).
#[derive(Clone)]
pub struct QuasiArithmetic {
    label: String,
    forward: ScalarFn,
    inverse: ScalarFn,
}

impl fmt::Debug for QuasiArithmetic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuasiArithmetic").field("label", &self.label).finish()
    }
}

impl QuasiArithmetic {
    /// The caller supplies both `forward` and its inverse.
    pub fn new<F, G>(label: impl Into<String>, forward: F, inverse: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
        }
    }

    /// Generator x^α (α ≠ 0) of the power mean. Common exponents avoid `powf`.
    pub fn power(alpha: f64) -> Result<Self, MeanError> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(MeanError::InvalidParameter(format!(
                "power mean exponent must be finite and nonzero, got {alpha}"
            )));
        }
        let label = format!("power:{alpha}");
        Ok(if alpha == 1.0 {
            Self::new(label, |x| x, |y| y)
        } else if alpha == 2.0 {
            Self::new(label, |x| x * x, f64::sqrt)
        } else if alpha == -1.0 {
            Self::new(label, f64::recip, f64::recip)
        } else if alpha == 0.5 {
            Self::new(label, f64::sqrt, |y| y * y)
        } else if (alpha - 1.0 / 3.0).abs() < 1e-15 {
            Self::new(label, f64::cbrt, |y| y * y * y)
        } else {
            Self::new(label, move |x: f64| x.powf(alpha), move |y: f64| y.powf(1.0 / alpha))
        })
    }

    /// Generators by name: identity, log, exp, square, sqrt, reciprocal.
    pub fn named(name: &str) -> Result<Self, MeanError> {
        Ok(match name {
            "identity" => Self::new(name, |x| x, |y| y),
            "log" => Self::new(name, f64::ln, f64::exp),
            "exp" => Self::new(name, f64::exp, f64::ln),
            "square" => Self::new(name, |x| x * x, f64::sqrt),
            "sqrt" => Self::new(name, f64::sqrt, |y| y * y),
            "reciprocal" => Self::new(name, f64::recip, f64::recip),
            other => {
                return Err(MeanError::InvalidParameter(format!(
                    "unknown generator `{other}` (expected identity, log, exp, square, sqrt or reciprocal)"
                )))
            }
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn forward(&self, x: f64) -> f64 {
        (self.forward)(x)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        (self.inverse)(y)
    }

    pub fn apply(&self, x: f64, y: f64) -> Result<f64, MeanError> {
        self.apply_many(&[x, y])
    }

    /// f⁻¹ of the average of f over `values`; the closed form of every
    /// level of the quasi-arithmetic tower.
    pub fn apply_many(&self, values: &[f64]) -> Result<f64, MeanError> {
        let avg = values.iter().map(|&x| self.forward(x)).sum::<f64>() / values.len() as f64;
        let out = self.inverse(avg);
        if out.is_finite() {
            Ok(out)
        } else {
            Err(MeanError::Domain(format!(
                "generator `{}` could not be inverted at {avg}",
                self.label
            )))
        }
    }
}

/// Scalar map f with f(1) = 1 that represents a homogeneous monotone mean
/// through μ(x, y) = x·f(y/x).
#[derive(Clone)]
pub struct RepresentingFunction {
    label: String,
    f: ScalarFn,
}

impl fmt::Debug for RepresentingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RepresentingFunction")
            .field("label", &self.label)
            .finish()
    }
}

impl RepresentingFunction {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    /// (1 + x)/2
    pub fn arithmetic() -> Self {
        Self::new("arithmetic", |x| 0.5 * (1.0 + x))
    }

    /// √x
    pub fn geometric() -> Self {
        Self::new("geometric", f64::sqrt)
    }

    /// 2x/(1 + x)
    pub fn harmonic() -> Self {
        Self::new("harmonic", |x| 2.0 * x / (1.0 + x))
    }

    /// (x − 1)/log x
    pub fn logarithmic() -> Self {
        Self::new("logarithmic", |x| logarithmic_closed_form(1.0, x))
    }

    /// x, the representing function of the right-trivial mean (A, B) ↦ B.
    pub fn right_trivial() -> Self {
        Self::new("right_trivial", |x| x)
    }

    /// x ↦ μ(1, x) for a two-variable mean μ.
    pub fn of_mean<M>(label: impl Into<String>, mean: M) -> Self
    where
        M: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(label, move |x| mean(1.0, x))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// |f(1) − 1|
    pub fn normalization_defect(&self) -> f64 {
        (self.eval(1.0) - 1.0).abs()
    }

    /// Largest decrease f(xᵢ) − f(xᵢ₊₁) over consecutive points of the
    /// sorted grid; zero when f is nondecreasing there.
    pub fn monotonicity_defect(&self, grid: &[f64]) -> f64 {
        let mut pts = grid.to_vec();
        pts.sort_by(f64::total_cmp);
        pts.windows(2)
            .map(|w| (self.eval(w[0]) - self.eval(w[1])).max(0.0))
            .fold(0.0, f64::max)
    }

    /// x·f(y/x)
    pub fn scalar_mean(&self, x: f64, y: f64) -> f64 {
        x * self.eval(y / x)
    }
}

fn check_positive(points: &[f64]) -> Result<(), MeanError> {
    if points.iter().all(|&x| x > 0.0 && x < f64::INFINITY) {
        Ok(())
    } else {
        Err(not_positive(points))
    }
}

#[cold]
fn not_positive(points: &[f64]) -> MeanError {
    let bad = points
        .iter()
        .find(|&&x| !(x > 0.0 && x < f64::INFINITY))
        .copied()
        .unwrap_or(f64::NAN);
    MeanError::Domain(format!("{bad} is not a positive real"))
}

fn binary<F>(name: &str, space: Arc<ScalarSpace>, symmetric: bool, f: F) -> MeanSpec<ScalarSpace>
where
    F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
{
    MeanSpec::new(name, space, 2, symmetric, move |p: &[f64]| {
        check_positive(p)?;
        Ok(f(p[0], p[1]))
    })
}

fn space_for(metric: ScalarMetric) -> Arc<ScalarSpace> {
    Arc::new(ScalarSpace { metric })
}

/// Arithmetic 2-mean; ρ = 1/2 globally under the absolute metric.
pub fn arithmetic_mean(metric: ScalarMetric) -> MeanSpec<ScalarSpace> {
    let m = binary("arithmetic", space_for(metric), true, arithmetic);
    match metric {
        ScalarMetric::Absolute => m.with_rho(0.5),
        ScalarMetric::LogAbsolute => m,
    }
}

/// Geometric 2-mean; ρ = 1/2 globally under the log metric.
pub fn geometric_mean(metric: ScalarMetric) -> MeanSpec<ScalarSpace> {
    let m = binary("geometric", space_for(metric), true, geometric);
    match metric {
        ScalarMetric::LogAbsolute => m.with_rho(0.5),
        ScalarMetric::Absolute => m,
    }
}

/// Harmonic 2-mean. No global certificate; see [`interval_rho_power`].
pub fn harmonic_mean(metric: ScalarMetric) -> MeanSpec<ScalarSpace> {
    binary("harmonic", space_for(metric), true, harmonic)
}

/// The affine mean s·x + (1−s)·y on the whole real line, absolute metric.
pub fn weighted_mean(s: f64) -> Result<MeanSpec<ScalarSpace>, MeanError> {
    let w = WeightedAffine::new(s)?;
    Ok(MeanSpec::new(
        format!("weighted:{s}"),
        ScalarSpace::absolute(),
        2,
        false,
        move |p: &[f64]| Ok(w.apply(p[0], p[1])),
    )
    .with_rho(w.rho()))
}

pub fn quasi_arithmetic_mean(q: QuasiArithmetic, metric: ScalarMetric) -> MeanSpec<ScalarSpace> {
    let name = format!("quasi:{}", q.label());
    MeanSpec::new(name, space_for(metric), 2, true, move |p: &[f64]| {
        check_positive(p)?;
        q.apply(p[0], p[1])
    })
}

pub fn power_mean(alpha: f64, metric: ScalarMetric) -> Result<MeanSpec<ScalarSpace>, MeanError> {
    let q = QuasiArithmetic::power(alpha)?;
    Ok(quasi_arithmetic_mean(q, metric).renamed(format!("power:{alpha}")))
}

/// (x, y) ↦ x. Idempotent but not contractive in its second argument;
/// its barycentric iteration never settles on unequal tuples.
pub fn left_trivial_mean(metric: ScalarMetric) -> MeanSpec<ScalarSpace> {
    binary("left", space_for(metric), false, |x, _| x)
}

/// (x, y) ↦ max(x, y).
pub fn max_mean(metric: ScalarMetric) -> MeanSpec<ScalarSpace> {
    binary("max", space_for(metric), true, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn positive_real_rejects_nonpositive() {
        assert!(PositiveReal::new(0.0).is_err());
        assert!(PositiveReal::new(-2.0).is_err());
        assert!(PositiveReal::new(f64::NAN).is_err());
        assert_eq!(PositiveReal::new(2.5).unwrap().value(), 2.5);
    }

    #[test]
    fn basic_means() {
        assert_eq!(arithmetic(2.0, 4.0), 3.0);
        assert_eq!(geometric(1.0, 4.0), 2.0);
        assert_eq!(harmonic(1.0, 1.0), 1.0);
        assert_relative_eq!(harmonic(2.0, 2.0 / 3.0), 1.0, epsilon = 1e-15);
        for x in [0.1, 1.0, 7.5] {
            assert_eq!(arithmetic(x, x), x);
            assert_relative_eq!(geometric(x, x), x, epsilon = 1e-15);
            assert_relative_eq!(harmonic(x, x), x, epsilon = 1e-15);
        }
    }

    #[test]
    fn representing_functions_match_means() {
        for t in [0.2, 1.0, 3.0, 11.0] {
            assert_relative_eq!(arithmetic(1.0, t), RepresentingFunction::arithmetic().eval(t));
            assert_relative_eq!(geometric(1.0, t), RepresentingFunction::geometric().eval(t));
            assert_relative_eq!(
                harmonic(1.0, t),
                RepresentingFunction::harmonic().eval(t),
                epsilon = 1e-15
            );
        }
        for f in [
            RepresentingFunction::arithmetic(),
            RepresentingFunction::geometric(),
            RepresentingFunction::harmonic(),
            RepresentingFunction::logarithmic(),
        ] {
            assert!(f.normalization_defect() < 1e-15, "{}", f.label());
            let grid: Vec<f64> = (1..200).map(|i| i as f64 * 0.05).collect();
            assert_eq!(f.monotonicity_defect(&grid), 0.0, "{}", f.label());
        }
        let bad = RepresentingFunction::new("decreasing", |x| 1.0 / x);
        assert!(bad.monotonicity_defect(&[0.5, 1.0, 2.0]) > 0.0);
    }

    #[test]
    fn geometric_is_log_midpoint() {
        let space = ScalarSpace {
            metric: ScalarMetric::LogAbsolute,
        };
        let (x, y) = (0.3, 17.0);
        let g = geometric(x, y);
        let half = 0.5 * space.distance(&x, &y);
        assert_relative_eq!(space.distance(&x, &g), half, epsilon = 1e-14);
        assert_relative_eq!(space.distance(&g, &y), half, epsilon = 1e-14);
    }

    #[test]
    fn weighted_affine_parameters() {
        let w = WeightedAffine::new(2.0 / 3.0).unwrap();
        assert_relative_eq!(w.apply(1.0, 0.0), 2.0 / 3.0);
        assert_relative_eq!(w.rho(), 2.0 / 3.0);
        assert!(WeightedAffine::new(0.0).is_err());
        assert!(WeightedAffine::new(1.0).is_err());
        assert!(weighted_mean(1.5).is_err());
    }

    #[test]
    fn quasi_arithmetic_generators() {
        let log = QuasiArithmetic::named("log").unwrap();
        assert_relative_eq!(log.apply(2.0, 8.0).unwrap(), 4.0, epsilon = 1e-14);
        let id = QuasiArithmetic::named("identity").unwrap();
        assert_eq!(id.apply(2.0, 8.0).unwrap(), 5.0);
        let sq = QuasiArithmetic::named("square").unwrap();
        assert_relative_eq!(sq.apply(1.0, 7.0).unwrap(), 5.0, epsilon = 1e-15);
        assert!(QuasiArithmetic::named("tan").is_err());
        assert!(QuasiArithmetic::power(0.0).is_err());
        let bad = QuasiArithmetic::new("broken", |x| x, |_| f64::NAN);
        assert!(matches!(bad.apply(1.0, 2.0), Err(MeanError::Domain(_))));
    }

    #[test]
    fn power_fast_paths_agree_with_powf() {
        for alpha in [2.0, -1.0, 0.5, 1.0 / 3.0, 1.7] {
            let q = QuasiArithmetic::power(alpha).unwrap();
            for (x, y) in [(0.5f64, 3.0f64), (2.0, 9.0)] {
                let expect = ((x.powf(alpha) + y.powf(alpha)) / 2.0).powf(1.0 / alpha);
                assert_relative_eq!(q.apply(x, y).unwrap(), expect, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn logarithmic_closed_form_values() {
        assert_eq!(logarithmic_closed_form(3.0, 3.0), 3.0);
        assert_relative_eq!(
            logarithmic_closed_form(1.0, std::f64::consts::E),
            std::f64::consts::E - 1.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(logarithmic_closed_form(2.0, 8.0), 6.0 / 4f64.ln(), max_relative = 1e-15);
        // inside the series band, against a high-order expansion
        for u in [1e-7, -3e-7, 9e-7] {
            let a = 1.7;
            let b = a * f64::exp(u);
            let series = a * (1.0 + u / 2.0 + u * u / 6.0 + u.powi(3) / 24.0 + u.powi(4) / 120.0);
            assert_relative_eq!(logarithmic_closed_form(a, b), series, max_relative = 1e-15);
        }
        assert_relative_eq!(logarithmic_closed_form(4.0, 1.0), logarithmic_closed_form(1.0, 4.0));
    }

    #[test]
    fn interval_helpers() {
        assert_eq!(working_interval(&[1.0]), 1);
        assert_eq!(working_interval(&[0.5, 2.0]), 2);
        assert_eq!(working_interval(&[0.3, 1.5]), 4);
        assert_relative_eq!(interval_rho_power(1.0, 2), 0.8);
        assert_relative_eq!(interval_rho_power(-1.0, 2), 0.8);
        assert_relative_eq!(interval_rho_power(2.0, 1), 0.5);
    }

    #[test]
    fn mean_specs_validate_domain() {
        let g = geometric_mean(ScalarMetric::LogAbsolute);
        assert_eq!(g.declared_rho(), Some(0.5));
        assert!(matches!(g.evaluate(&[-1.0, 2.0]), Err(MeanError::Domain(_))));
        assert_eq!(arithmetic_mean(ScalarMetric::Absolute).declared_rho(), Some(0.5));
        assert_eq!(arithmetic_mean(ScalarMetric::LogAbsolute).declared_rho(), None);
        // the affine mean lives on all of ℝ
        assert_eq!(weighted_mean(0.5).unwrap().evaluate(&[-1.0, 3.0]).unwrap(), 1.0);
    }

    #[test]
    fn scalar_diameter_matches_pairwise() {
        for metric in [ScalarMetric::Absolute, ScalarMetric::LogAbsolute] {
            let s = ScalarSpace { metric };
            let pts = [3.0, 0.5, 9.0, 2.0];
            let mut pairwise: f64 = 0.0;
            for a in pts {
                for b in pts {
                    pairwise = pairwise.max(s.distance(&a, &b));
                }
            }
            assert_relative_eq!(s.diameter(&pts), pairwise);
        }
    }
}
