//! Space-agnostic extension engine.
//!
//! A [`MeanSpec`] pairs a k-ary mean with the metric space it lives on. The
//! barycentric operator replaces every entry of a (k+1)-tuple by the mean of
//! the other k entries; when repeated application collapses the tuple to a
//! single point, that point is the value of the extended (k+1)-mean. The
//! engine iterates this operator, builds towers of extensions, and provides
//! the residual checks used to audit the construction (invariance under the
//! barycentric operator, stable extension/reduction, product factorization,
//! homomorphism transport).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{MeanError, NonConvergence, ReduceError};

/// Default cap on barycentric iterations.
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Ratio between the tolerance of a tower level and the level below it.
pub const NESTED_TOLERANCE_FACTOR: f64 = 10.0;

/// Factor by which the resolution floor grows with each extension level.
///
/// A (k+1)-mean evaluated by iteration is only accurate to its own stopping
/// threshold, so a barycentric iteration over it cannot shrink the tuple
/// below that noise.
pub const RESOLUTION_GROWTH: f64 = 4.0;

/// A metric space the engine can iterate in.
pub trait MetricSpace: Send + Sync + 'static {
    type Point: Clone + Send + Sync + fmt::Debug + 'static;

    fn distance(&self, a: &Self::Point, b: &Self::Point) -> f64;

    /// Smallest distance the space can resolve near `x` in floating point.
    ///
    /// Convergence tests never demand a diameter below this.
    fn resolution(&self, _x: &Self::Point) -> f64 {
        0.0
    }

    /// Largest pairwise distance of `points`.
    fn diameter(&self, points: &[Self::Point]) -> f64 {
        let mut diam: f64 = 0.0;
        for (i, a) in points.iter().enumerate() {
            for b in &points[i + 1..] {
                diam = diam.max(self.distance(a, b));
            }
        }
        diam
    }

    /// `None` when the diameter of `points` is at most `bound`. Otherwise a
    /// value above `bound` witnessing a pair that is too far apart: its
    /// distance, or any finite lower bound for it, or NaN or infinity when
    /// the distance is undefined. May stop at the first such pair.
    fn distance_over(&self, points: &[Self::Point], bound: f64) -> Option<f64> {
        for (i, a) in points.iter().enumerate() {
            for b in &points[i + 1..] {
                let d = self.distance(a, b);
                if !(d <= bound) {
                    return Some(d);
                }
            }
        }
        None
    }
}

type EvalFn<P> = dyn Fn(&[P]) -> Result<P, MeanError> + Send + Sync;

/// A k-ary mean on a metric space.
pub struct MeanSpec<S: MetricSpace> {
    name: Arc<str>,
    space: Arc<S>,
    arity: usize,
    symmetric: bool,
    declared_rho: Option<f64>,
    /// Number of barycentric extensions between this mean and a directly
    /// evaluated one.
    depth: u32,
    eval: Arc<EvalFn<S::Point>>,
}

impl<S: MetricSpace> Clone for MeanSpec<S> {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            space: self.space.clone(),
            arity: self.arity,
            symmetric: self.symmetric,
            declared_rho: self.declared_rho,
            depth: self.depth,
            eval: self.eval.clone(),
        }
    }
}

impl<S: MetricSpace> fmt::Debug for MeanSpec<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeanSpec")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("symmetric", &self.symmetric)
            .field("declared_rho", &self.declared_rho)
            .finish()
    }
}

impl<S: MetricSpace> MeanSpec<S> {
    /// Wraps an evaluation function. `arity` must be at least 2.
    pub fn new<F>(name: impl Into<String>, space: Arc<S>, arity: usize, symmetric: bool, eval: F) -> Self
    where
        F: Fn(&[S::Point]) -> Result<S::Point, MeanError> + Send + Sync + 'static,
    {
        assert!(arity >= 2, "a mean takes at least two arguments");
        Self {
            name: Arc::from(name.into()),
            space,
            arity,
            symmetric,
            declared_rho: None,
            depth: 0,
            eval: Arc::new(eval),
        }
    }

    /// Attaches a coordinatewise contraction constant.
    pub fn with_rho(mut self, rho: f64) -> Self {
        self.declared_rho = Some(rho);
        self
    }

    pub fn without_rho(mut self) -> Self {
        self.declared_rho = None;
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = Arc::from(name.into());
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &Arc<S> {
        &self.space
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn declared_rho(&self) -> Option<f64> {
        self.declared_rho
    }

    pub fn distance(&self, a: &S::Point, b: &S::Point) -> f64 {
        self.space.distance(a, b)
    }

    /// Smallest diameter a barycentric iteration of this mean is asked to
    /// reach near `x`: the space resolution, grown by [`RESOLUTION_GROWTH`]
    /// per extension level.
    pub fn resolution_floor(&self, x: &S::Point) -> f64 {
        self.space.resolution(x) * RESOLUTION_GROWTH.powi(self.depth as i32)
    }

    #[inline]
    pub fn evaluate(&self, points: &[S::Point]) -> Result<S::Point, MeanError> {
        if points.len() != self.arity {
            return Err(MeanError::Arity {
                expected: self.arity,
                got: points.len(),
            });
        }
        (self.eval)(points)
    }
}

/// Which barycentric operator to iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Entry i is the mean of the tuple with coordinate i deleted.
    #[default]
    Beta,
    /// Entry i is the mean of the tuple with coordinate k+2−i deleted.
    BetaStar,
}

impl Variant {
    /// Zero-based index of the coordinate deleted to form output entry `i`
    /// of a tuple of length `len`.
    fn deleted(self, i: usize, len: usize) -> usize {
        match self {
            Variant::Beta => i,
            Variant::BetaStar => len - 1 - i,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Beta => f.write_str("beta"),
            Variant::BetaStar => f.write_str("beta_star"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "beta" => Ok(Variant::Beta),
            "beta_star" | "beta*" => Ok(Variant::BetaStar),
            other => Err(format!("unknown variant `{other}` (expected beta or beta_star)")),
        }
    }
}

/// Stopping rule for a power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergeOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    pub variant: Variant,
}

impl ConvergeOptions {
    pub fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            max_iter: DEFAULT_MAX_ITER,
            variant: Variant::Beta,
        }
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    fn validate(&self) -> Result<(), MeanError> {
        if !(self.tolerance > 0.0) {
            return Err(MeanError::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Audit record of one power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport<P> {
    pub iterations: usize,
    /// Tuple diameter before the first step and after every step.
    pub diameter_trace: Vec<f64>,
    pub limit: P,
    pub converged: bool,
    /// Threshold actually applied: the requested tolerance, raised to the
    /// mean's resolution floor where that is coarser.
    pub tolerance: f64,
}

impl<P> ConvergenceReport<P> {
    pub fn final_diameter(&self) -> f64 {
        *self
            .diameter_trace
            .last()
            .expect("trace always holds the initial diameter")
    }

    fn failure(&self, arity: usize) -> NonConvergence {
        NonConvergence {
            arity,
            iterations: self.iterations,
            tolerance: self.tolerance,
            diameter_trace: self.diameter_trace.clone(),
        }
    }
}

fn check_tuple<S: MetricSpace>(mean: &MeanSpec<S>, len: usize) -> Result<(), MeanError> {
    if len != mean.arity + 1 {
        return Err(MeanError::Arity {
            expected: mean.arity + 1,
            got: len,
        });
    }
    Ok(())
}

fn step_into<S: MetricSpace>(
    mean: &MeanSpec<S>,
    src: &[S::Point],
    dst: &mut Buf<S::Point>,
    variant: Variant,
    scratch: &mut Buf<S::Point>,
) -> Result<(), MeanError> {
    dst.clear();
    let len = src.len();
    for i in 0..len {
        let skip = variant.deleted(i, len);
        scratch.clear();
        for (j, p) in src.iter().enumerate() {
            if j != skip {
                scratch.push(p.clone());
            }
        }
        dst.push((mean.eval)(scratch)?);
    }
    Ok(())
}

/// One application of the barycentric operator of `mean` to a tuple of
/// length `mean.arity() + 1`.
pub fn barycentric_step<S: MetricSpace>(mean: &MeanSpec<S>, tuple: &[S::Point]) -> Result<Vec<S::Point>, MeanError> {
    barycentric_step_variant(mean, tuple, Variant::Beta)
}

/// One application of the reversed barycentric operator.
pub fn barycentric_step_star<S: MetricSpace>(
    mean: &MeanSpec<S>,
    tuple: &[S::Point],
) -> Result<Vec<S::Point>, MeanError> {
    barycentric_step_variant(mean, tuple, Variant::BetaStar)
}

pub fn barycentric_step_variant<S: MetricSpace>(
    mean: &MeanSpec<S>,
    tuple: &[S::Point],
    variant: Variant,
) -> Result<Vec<S::Point>, MeanError> {
    check_tuple(mean, tuple.len())?;
    let mut out = Buf::new();
    step_into(mean, tuple, &mut out, variant, &mut Buf::new())?;
    Ok(out.into_vec())
}

/// Iterates the barycentric operator until the tuple diameter drops to the
/// tolerance or `max_iter` steps have run.
///
/// Running out of steps is not an error: the report comes back with
/// `converged == false`.
pub fn power_converge<S: MetricSpace>(
    mean: &MeanSpec<S>,
    tuple: &[S::Point],
    opts: ConvergeOptions,
) -> Result<ConvergenceReport<S::Point>, MeanError> {
    iterate(mean, tuple, opts, true)
}

type Buf<P> = SmallVec<[P; 8]>;

fn iterate<S: MetricSpace>(
    mean: &MeanSpec<S>,
    tuple: &[S::Point],
    opts: ConvergeOptions,
    record: bool,
) -> Result<ConvergenceReport<S::Point>, MeanError> {
    check_tuple(mean, tuple.len())?;
    opts.validate()?;
    let space = mean.space();
    let mut cur: Buf<S::Point> = tuple.iter().cloned().collect();
    let mut next: Buf<S::Point> = Buf::with_capacity(cur.len());
    let mut scratch: Buf<S::Point> = Buf::with_capacity(mean.arity);
    let threshold = |pts: &[S::Point]| opts.tolerance.max(mean.resolution_floor(&pts[0]));
    let mut tol = threshold(&cur);
    // Without a trace the exact diameter is only needed once, at the end;
    // each step just has to find one pair farther apart than the tolerance.
    let settled = |pts: &[S::Point], tol: f64, iterations: usize| -> Result<(bool, f64), MeanError> {
        let diam = if record {
            space.diameter(pts)
        } else {
            match space.distance_over(pts, tol) {
                Some(d) => d,
                None => return Ok((true, 0.0)),
            }
        };
        if !diam.is_finite() {
            return Err(MeanError::Domain(format!(
                "tuple diameter became {diam} after {iterations} barycentric steps"
            )));
        }
        Ok((diam <= tol, diam))
    };
    let mut iterations = 0;
    let (mut converged, diam) = settled(&cur, tol, iterations)?;
    let mut trace = if record { vec![diam] } else { Vec::new() };
    while !converged && iterations < opts.max_iter {
        step_into(mean, &cur, &mut next, opts.variant, &mut scratch)?;
        std::mem::swap(&mut cur, &mut next);
        iterations += 1;
        tol = threshold(&cur);
        let (done, diam) = settled(&cur, tol, iterations)?;
        converged = done;
        if record {
            trace.push(diam);
        }
    }
    if !record {
        trace.push(space.diameter(&cur));
    }
    let limit = cur.swap_remove(0);
    Ok(ConvergenceReport {
        iterations,
        diameter_trace: trace,
        limit,
        converged,
        tolerance: tol,
    })
}

/// The (k+1)-mean obtained as the limit of the barycentric iteration of a
/// k-mean.
///
/// Symmetry and the declared contraction constant carry over unchanged. An
/// evaluation that exhausts `max_iter` fails with
/// [`MeanError::NotConverged`].
pub fn beta_extend<S: MetricSpace>(mean: &MeanSpec<S>, opts: ConvergeOptions) -> Result<MeanSpec<S>, MeanError> {
    opts.validate()?;
    let base = mean.clone();
    let arity = mean.arity + 1;
    let name = format!("{}[{}]", root_name(mean.name()), arity);
    let ext = MeanSpec::new(
        name,
        mean.space.clone(),
        arity,
        mean.symmetric,
        move |pts: &[S::Point]| {
            let report = iterate(&base, pts, opts, false)?;
            if report.converged {
                Ok(report.limit)
            } else {
                Err(MeanError::NotConverged(Box::new(report.failure(base.arity + 1))))
            }
        },
    );
    let ext = MeanSpec {
        depth: mean.depth + 1,
        ..ext
    };
    Ok(match mean.declared_rho {
        Some(rho) => ext.with_rho(rho),
        None => ext,
    })
}

fn root_name(name: &str) -> &str {
    match name.find('[') {
        Some(i) => &name[..i],
        None => name,
    }
}

/// Tolerance used for the level of arity `level` in a tower topped at
/// `target`.
pub fn nested_tolerance(top: f64, level: usize, target: usize) -> f64 {
    top / NESTED_TOLERANCE_FACTOR.powi((target - level) as i32)
}

/// Extends `mean` inductively to every arity up to `target_arity`.
///
/// Element j of the result has arity `mean.arity() + 1 + j` and is the
/// extension of element j−1. The top level runs at `opts.tolerance`; each
/// level below it runs ten times tighter.
pub fn extend_tower<S: MetricSpace>(
    mean: &MeanSpec<S>,
    target_arity: usize,
    opts: ConvergeOptions,
) -> Result<Vec<MeanSpec<S>>, MeanError> {
    if target_arity <= mean.arity {
        return Err(MeanError::InvalidParameter(format!(
            "target arity {target_arity} must exceed the base arity {}",
            mean.arity
        )));
    }
    opts.validate()?;
    let mut levels: Vec<MeanSpec<S>> = Vec::with_capacity(target_arity - mean.arity);
    for arity in mean.arity + 1..=target_arity {
        let below = levels.last().unwrap_or(mean);
        let level_opts = ConvergeOptions {
            tolerance: nested_tolerance(opts.tolerance, arity, target_arity),
            ..opts
        };
        let next = beta_extend(below, level_opts)?;
        levels.push(next);
    }
    Ok(levels)
}

/// The member of the tower over `mean` with the given arity; `mean` itself
/// when the arities already agree.
pub fn tower_mean<S: MetricSpace>(
    mean: &MeanSpec<S>,
    arity: usize,
    opts: ConvergeOptions,
) -> Result<MeanSpec<S>, MeanError> {
    if arity == mean.arity {
        return Ok(mean.clone());
    }
    let mut levels = extend_tower(mean, arity, opts)?;
    Ok(levels.pop().expect("tower has at least one level"))
}

fn check_extension_pair<S: MetricSpace>(ext: &MeanSpec<S>, base: &MeanSpec<S>) -> Result<(), MeanError> {
    if ext.arity != base.arity + 1 {
        return Err(MeanError::Arity {
            expected: base.arity + 1,
            got: ext.arity,
        });
    }
    Ok(())
}

/// Distance between `ext(tuple)` and `ext(β_base(tuple))`; zero exactly when
/// `ext` is invariant under the barycentric operator of `base` at `tuple`.
pub fn beta_invariance_residual<S: MetricSpace>(
    ext: &MeanSpec<S>,
    base: &MeanSpec<S>,
    tuple: &[S::Point],
    variant: Variant,
) -> Result<f64, MeanError> {
    check_extension_pair(ext, base)?;
    let stepped = barycentric_step_variant(base, tuple, variant)?;
    Ok(ext.distance(&ext.evaluate(tuple)?, &ext.evaluate(&stepped)?))
}

/// The unique fixed point of `x ↦ mean(anchor, x)`.
///
/// Needs a declared contraction constant ρ < 1; iteration stops once the a
/// posteriori error bound ρ/(1−ρ)·step falls below `tolerance`.
pub fn stable_reduce<S: MetricSpace>(
    mean: &MeanSpec<S>,
    anchor: &[S::Point],
    tolerance: f64,
    max_iter: usize,
) -> Result<S::Point, ReduceError<S::Point>> {
    let rho = match mean.declared_rho {
        Some(rho) if rho > 0.0 && rho < 1.0 => rho,
        other => {
            return Err(MeanError::InvalidParameter(format!(
                "stable reduction needs a contraction constant in (0,1), got {other:?}"
            ))
            .into())
        }
    };
    if anchor.len() + 1 != mean.arity {
        return Err(MeanError::Arity {
            expected: mean.arity - 1,
            got: anchor.len(),
        }
        .into());
    }
    let mut args: Vec<S::Point> = anchor.to_vec();
    args.push(anchor[0].clone());
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = mean.evaluate(&args)?;
        let step = mean.distance(&next, &args[anchor.len()]);
        residual = step * rho / (1.0 - rho);
        args[anchor.len()] = next;
        if residual <= tolerance.max(mean.resolution_floor(&args[0])) {
            return Ok(args.pop().expect("argument list is non-empty"));
        }
    }
    Err(ReduceError::NotConverged {
        last: args.pop().expect("argument list is non-empty"),
        residual,
        iterations: max_iter,
    })
}

/// Distance between `ext(anchor, base(anchor))` and `base(anchor)`.
pub fn stable_extension_residual<S: MetricSpace>(
    ext: &MeanSpec<S>,
    base: &MeanSpec<S>,
    anchor: &[S::Point],
) -> Result<f64, MeanError> {
    check_extension_pair(ext, base)?;
    let m = base.evaluate(anchor)?;
    let mut args = anchor.to_vec();
    args.push(m.clone());
    Ok(ext.distance(&ext.evaluate(&args)?, &m))
}

/// Cartesian product of two metric spaces under the sup metric.
#[derive(Debug, Clone)]
pub struct ProductSpace<A, B> {
    pub left: Arc<A>,
    pub right: Arc<B>,
}

impl<A: MetricSpace, B: MetricSpace> MetricSpace for ProductSpace<A, B> {
    type Point = (A::Point, B::Point);

    fn distance(&self, a: &Self::Point, b: &Self::Point) -> f64 {
        self.left.distance(&a.0, &b.0).max(self.right.distance(&a.1, &b.1))
    }

    fn resolution(&self, x: &Self::Point) -> f64 {
        self.left.resolution(&x.0).max(self.right.resolution(&x.1))
    }

    fn diameter(&self, points: &[Self::Point]) -> f64 {
        let (l, r): (Vec<_>, Vec<_>) = points.iter().cloned().unzip();
        self.left.diameter(&l).max(self.right.diameter(&r))
    }
}

/// Componentwise mean on the product of the two spaces.
pub fn product_mean<A: MetricSpace, B: MetricSpace>(
    left: &MeanSpec<A>,
    right: &MeanSpec<B>,
) -> Result<MeanSpec<ProductSpace<A, B>>, MeanError> {
    if left.arity != right.arity {
        return Err(MeanError::Arity {
            expected: left.arity,
            got: right.arity,
        });
    }
    let space = Arc::new(ProductSpace {
        left: left.space.clone(),
        right: right.space.clone(),
    });
    let (l, r) = (left.clone(), right.clone());
    let name = format!("{}x{}", left.name(), right.name());
    let mean = MeanSpec::new(
        name,
        space,
        left.arity,
        left.symmetric && right.symmetric,
        move |pts: &[(A::Point, B::Point)]| {
            let (xs, ys): (Vec<_>, Vec<_>) = pts.iter().cloned().unzip();
            Ok((l.evaluate(&xs)?, r.evaluate(&ys)?))
        },
    );
    let mean = MeanSpec {
        depth: left.depth.max(right.depth),
        ..mean
    };
    Ok(match (left.declared_rho, right.declared_rho) {
        (Some(a), Some(b)) => mean.with_rho(a.max(b)),
        _ => mean,
    })
}

/// `d_Y(g(mu(tuple)), nu(g(tuple)))`; zero when `g` intertwines the means.
pub fn homomorphism_residual<X, Y, G>(
    g: G,
    mu: &MeanSpec<X>,
    nu: &MeanSpec<Y>,
    tuple: &[X::Point],
) -> Result<f64, MeanError>
where
    X: MetricSpace,
    Y: MetricSpace,
    G: Fn(&X::Point) -> Y::Point,
{
    if mu.arity != nu.arity {
        return Err(MeanError::Arity {
            expected: mu.arity,
            got: nu.arity,
        });
    }
    let lhs = g(&mu.evaluate(tuple)?);
    let mapped: Vec<Y::Point> = tuple.iter().map(&g).collect();
    Ok(nu.distance(&lhs, &nu.evaluate(&mapped)?))
}
