//! Sampled property audits.
//!
//! Every property is checked on `samples` random instances. Sample i draws
//! from a generator seeded with `seed + i`, so reports are reproducible. The
//! margin of a property is its worst slack over all samples: the allowed
//! value minus the observed one, negative when violated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::{matrix_json, scalar_base_mean, spd_base_mean, JobConfig, JobError, MeanName, ReportHeader, Space};
use crate::engine::{tower_mean, ConvergeOptions, MeanSpec, MetricSpace};
use crate::linalg::{
    loewner_margin, random_spd, random_spd_between, thompson_distance, OrderInterval, SpdMatrix, SpdSpace,
};
use crate::scalar::ScalarSpace;

/// Violations up to this size are attributed to rounding and iteration
/// tolerances.
pub const AUDIT_SLACK: f64 = 1e-8;

/// Half-width of the sampling interval [1/n, n] when none is configured.
const DEFAULT_AUDIT_INTERVAL: u32 = 4;

#[derive(Debug, Clone, Serialize)]
pub struct AuditResult {
    pub property: String,
    pub pass: bool,
    pub margin: f64,
    /// The sample attaining the margin.
    pub witness: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub header: ReportHeader,
    pub samples: usize,
    pub slack: f64,
    pub results: Vec<AuditResult>,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn result(&self, property: &str) -> Option<&AuditResult> {
        self.results.iter().find(|r| r.property == property)
    }
}

struct Worst {
    margin: f64,
    witness: Value,
}

impl Worst {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            witness: Value::Null,
        }
    }

    fn observe(&mut self, margin: f64, witness: impl FnOnce() -> Value) {
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if margin < self.margin || self.witness.is_null() {
            self.margin = margin;
            self.witness = witness();
        }
    }

    /// Passes when the margin is at least −slack.
    fn finish(self, property: impl Into<String>) -> AuditResult {
        let pass = self.margin >= -AUDIT_SLACK;
        self.finish_with(property, pass)
    }

    fn finish_with(self, property: impl Into<String>, pass: bool) -> AuditResult {
        AuditResult {
            property: property.into(),
            pass,
            margin: self.margin,
            witness: self.witness,
        }
    }
}

/// Sampling and ordering for the spaces an audit can run on.
trait Audited: MetricSpace {
    fn sample(rng: &mut ChaCha8Rng, n: u32, dim: usize) -> Self::Point;
    /// A random point above `x` in the space's order.
    fn sample_above(rng: &mut ChaCha8Rng, x: &Self::Point) -> Self::Point;
    /// Nonnegative exactly when `lo ≤ hi`, scaled relative to `hi`.
    fn order_margin(lo: &Self::Point, hi: &Self::Point) -> f64;
    fn point_json(p: &Self::Point) -> Value;
}

impl Audited for ScalarSpace {
    fn sample(rng: &mut ChaCha8Rng, n: u32, _dim: usize) -> f64 {
        let l = (n as f64).ln();
        rng.gen_range(-l..=l).exp()
    }

    fn sample_above(rng: &mut ChaCha8Rng, x: &f64) -> f64 {
        x * rng.gen_range(0.0..0.5f64).exp()
    }

    fn order_margin(lo: &f64, hi: &f64) -> f64 {
        (hi - lo) / hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE)
    }

    fn point_json(p: &f64) -> Value {
        Value::from(*p)
    }
}

impl Audited for SpdSpace {
    fn sample(rng: &mut ChaCha8Rng, n: u32, dim: usize) -> SpdMatrix {
        random_spd(rng, dim, OrderInterval { n })
    }

    fn sample_above(rng: &mut ChaCha8Rng, x: &SpdMatrix) -> SpdMatrix {
        let p = random_spd_between(rng, x.dim(), 1e-3, 0.5);
        x.add(&p).expect("dimensions agree")
    }

    fn order_margin(lo: &SpdMatrix, hi: &SpdMatrix) -> f64 {
        loewner_margin(lo, hi).unwrap_or(f64::NEG_INFINITY) / hi.spectral_bounds().0
    }

    fn point_json(p: &SpdMatrix) -> Value {
        matrix_json(p.matrix())
    }
}

fn tuple_json<S: Audited>(xs: &[S::Point]) -> Value {
    Value::Array(xs.iter().map(S::point_json).collect())
}

/// Pairs (lower, upper) of means expected to be ordered, by audited mean.
fn order_relations(name: &MeanName) -> Vec<(MeanName, MeanName)> {
    use MeanName::*;
    match name {
        Arithmetic | Geometric => vec![(Geometric, Arithmetic)],
        Harmonic => vec![(Harmonic, Geometric)],
        Logarithmic => vec![(Logarithmic, Agm), (Geometric, Logarithmic)],
        Agm => vec![(Geometric, Agm), (Agm, Arithmetic)],
        Hgm => vec![(Hgm, Geometric), (Harmonic, Hgm)],
        _ => Vec::new(),
    }
}

fn short(name: &MeanName) -> &'static str {
    match name {
        MeanName::Arithmetic => "A",
        MeanName::Geometric => "G",
        MeanName::Harmonic => "H",
        MeanName::Logarithmic => "L",
        MeanName::Agm => "AGM",
        MeanName::Hgm => "HGM",
        _ => "M",
    }
}

struct Ctx<'a> {
    cfg: &'a JobConfig,
    n: u32,
    opts: ConvergeOptions,
}

impl Ctx<'_> {
    fn rng(&self, i: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(i as u64))
    }

    fn tuple<S: Audited>(&self, rng: &mut ChaCha8Rng) -> Vec<S::Point> {
        (0..self.cfg.arity)
            .map(|_| S::sample(rng, self.n, self.cfg.dim))
            .collect()
    }
}

fn mean_properties<S: Audited>(
    ctx: &Ctx,
    build: impl Fn(&MeanName) -> Result<MeanSpec<S>, JobError>,
) -> Result<Vec<AuditResult>, JobError> {
    let name = ctx.cfg.mean_name()?;
    let arity = ctx.cfg.arity;
    let base = build(&name)?;
    let mu = tower_mean(&base, arity, ctx.opts)?;
    let space = base.space().clone();
    let samples = ctx.cfg.samples;
    let mut results = Vec::new();

    let mut idem = Worst::new();
    let mut sym = Worst::new();
    let mut mono = Worst::new();
    let mut nonexp = Worst::new();
    for i in 0..samples {
        let mut rng = ctx.rng(i);
        let x = ctx.tuple::<S>(&mut rng);

        let constant = vec![x[0].clone(); arity];
        let d = space.distance(&mu.evaluate(&constant)?, &x[0]);
        idem.observe(-d, || json!({"sample": i, "x": S::point_json(&x[0])}));

        let mx = mu.evaluate(&x)?;
        if base.is_symmetric() {
            let rev: Vec<_> = x.iter().rev().cloned().collect();
            let d = space.distance(&mx, &mu.evaluate(&rev)?);
            sym.observe(-d, || json!({"sample": i, "tuple": tuple_json::<S>(&x)}));
        }

        let above: Vec<_> = x.iter().map(|p| S::sample_above(&mut rng, p)).collect();
        let m_above = mu.evaluate(&above)?;
        mono.observe(
            S::order_margin(&mx, &m_above),
            || json!({"sample": i, "lower": tuple_json::<S>(&x), "upper": tuple_json::<S>(&above)}),
        );

        let y = ctx.tuple::<S>(&mut rng);
        let spread = x.iter().zip(&y).map(|(a, b)| space.distance(a, b)).fold(0.0, f64::max);
        let moved = space.distance(&mx, &mu.evaluate(&y)?);
        nonexp.observe(
            spread - moved,
            || json!({"sample": i, "x": tuple_json::<S>(&x), "y": tuple_json::<S>(&y)}),
        );
    }
    results.push(idem.finish("idempotency"));
    if base.is_symmetric() {
        results.push(sym.finish("symmetry"));
    }
    results.push(mono.finish("monotonicity"));
    results.push(nonexp.finish("nonexpansive"));

    // coordinatewise contraction of the base 2-mean, both coordinates
    let mut contraction = Worst::new();
    let mut convex = Worst::new();
    for i in 0..samples {
        let mut rng = ctx.rng(i);
        let (a, b, c) = (
            S::sample(&mut rng, ctx.n, ctx.cfg.dim),
            S::sample(&mut rng, ctx.n, ctx.cfg.dim),
            S::sample(&mut rng, ctx.n, ctx.cfg.dim),
        );
        let dbc = space.distance(&b, &c);
        if dbc == 0.0 {
            continue;
        }
        let second = space.distance(
            &base.evaluate(&[a.clone(), b.clone()])?,
            &base.evaluate(&[a.clone(), c.clone()])?,
        );
        let first = space.distance(
            &base.evaluate(&[b.clone(), a.clone()])?,
            &base.evaluate(&[c.clone(), a.clone()])?,
        );
        let ratio = first.max(second) / dbc;
        let witness = || json!({"sample": i, "a": S::point_json(&a), "b": S::point_json(&b), "c": S::point_json(&c), "ratio": ratio});
        contraction.observe(1.0 - ratio, witness);
        convex.observe(
            0.5 * dbc - first,
            || json!({"sample": i, "a": S::point_json(&a), "b": S::point_json(&b), "c": S::point_json(&c)}),
        );
    }
    let strictly_below_one = contraction.margin > 0.0;
    results.push(contraction.finish_with("contraction", strictly_below_one));
    if name == MeanName::Geometric {
        results.push(convex.finish("convexity"));
    }

    for (lo_name, hi_name) in order_relations(&name) {
        let lo = tower_mean(&build(&lo_name)?, arity, ctx.opts)?;
        let hi = tower_mean(&build(&hi_name)?, arity, ctx.opts)?;
        let mut w = Worst::new();
        for i in 0..samples {
            let mut rng = ctx.rng(i);
            let x = ctx.tuple::<S>(&mut rng);
            let margin = S::order_margin(&lo.evaluate(&x)?, &hi.evaluate(&x)?);
            w.observe(margin, || json!({"sample": i, "tuple": tuple_json::<S>(&x)}));
        }
        results.push(w.finish(format!("{}_{arity} <= {}_{arity}", short(&lo_name), short(&hi_name))));
    }
    Ok(results)
}

fn thompson_properties(ctx: &Ctx) -> Result<Vec<AuditResult>, JobError> {
    let d = |a: &SpdMatrix, b: &SpdMatrix| thompson_distance(a, b).unwrap_or(f64::NAN);
    let sum = |a: &SpdMatrix, b: &SpdMatrix| a.add(b).expect("dimensions agree");
    let mut checks: [(&str, Worst); 6] = [
        ("thompson: triangle inequality", Worst::new()),
        ("thompson: d(A+B,A+C) <= d(B,C)", Worst::new()),
        ("thompson: A1 <= A2 gives d(A1+B,A1+C) >= d(A2+B,A2+C)", Worst::new()),
        ("thompson: d(rA,rB) = d(A,B)", Worst::new()),
        ("thompson: d(A+B,C+D) <= max(d(A,C),d(B,D))", Worst::new()),
        ("thompson: d(A^-1,B^-1) = d(A,B)", Worst::new()),
    ];
    for i in 0..ctx.cfg.samples {
        let mut rng = ctx.rng(i);
        let mut draw = || SpdSpace::sample(&mut rng, ctx.n, ctx.cfg.dim);
        let (a, b, c, e) = (draw(), draw(), draw(), draw());
        let mut rng = ctx.rng(i);
        let r = rng.gen_range(-3.0f64..3.0).exp();
        let a2 = SpdSpace::sample_above(&mut rng, &a);
        let witness = || {
            json!({"sample": i, "A": matrix_json(a.matrix()), "B": matrix_json(b.matrix()),
                   "C": matrix_json(c.matrix()), "D": matrix_json(e.matrix())})
        };
        let dab = d(&a, &b);
        checks[0].1.observe(dab + d(&b, &c) - d(&a, &c), witness);
        checks[1].1.observe(d(&b, &c) - d(&sum(&a, &b), &sum(&a, &c)), witness);
        checks[2]
            .1
            .observe(d(&sum(&a, &b), &sum(&a, &c)) - d(&sum(&a2, &b), &sum(&a2, &c)), witness);
        checks[3].1.observe(-(d(&a.scale(r), &b.scale(r)) - dab).abs(), witness);
        checks[4]
            .1
            .observe(d(&a, &c).max(d(&b, &e)) - d(&sum(&a, &b), &sum(&c, &e)), witness);
        checks[5]
            .1
            .observe(-(d(&a.inverse(), &b.inverse()) - dab).abs(), witness);
    }
    Ok(checks.into_iter().map(|(name, w)| w.finish(name)).collect())
}

/// Runs every property suite that applies to the configured mean and space.
pub fn audit(cfg: &JobConfig) -> Result<AuditReport, JobError> {
    cfg.validate()?;
    if cfg.samples == 0 {
        return Err(JobError::Parse("an audit needs at least one sample".into()));
    }
    let n = cfg.interval_n.unwrap_or(DEFAULT_AUDIT_INTERVAL);
    let ctx = Ctx {
        cfg,
        n,
        opts: cfg.converge_options(),
    };
    let results = match cfg.space {
        Space::Scalar => mean_properties::<ScalarSpace>(&ctx, |m| scalar_base_mean(m, Some(n)))?,
        Space::Spd => {
            let interval = OrderInterval::new(n).map_err(|e| JobError::Parse(e.to_string()))?;
            let mut r = thompson_properties(&ctx)?;
            r.extend(mean_properties::<SpdSpace>(&ctx, |m| {
                spd_base_mean(m, Some(interval), cfg.dim, cfg.seed)
            })?);
            r
        }
    };
    Ok(AuditReport {
        header: cfg.header("audit"),
        samples: cfg.samples,
        slack: AUDIT_SLACK,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mean: &str, space: Space, samples: usize) -> JobConfig {
        JobConfig {
            mean: mean.into(),
            space,
            samples,
            ..JobConfig::default()
        }
    }

    #[test]
    fn scalar_geometric_audit_passes() {
        let r = audit(&cfg("geometric", Space::Scalar, 30)).unwrap();
        assert!(r.all_pass(), "{:#?}", r.results);
        assert!(r.result("G_3 <= A_3").is_some());
        assert!(r.result("convexity").is_some());
    }

    #[test]
    fn left_mean_fails_contraction() {
        let c = JobConfig {
            arity: 2,
            ..cfg("left", Space::Scalar, 10)
        };
        let r = audit(&c).unwrap();
        let contraction = r.result("contraction").unwrap();
        assert!(!contraction.pass);
        assert!(contraction.witness.get("ratio").is_some());
    }

    #[test]
    fn zero_samples_rejected() {
        assert_eq!(audit(&cfg("geometric", Space::Scalar, 0)).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn deterministic() {
        let c = cfg("harmonic", Space::Scalar, 10);
        let a = serde_json::to_string(&audit(&c).unwrap()).unwrap();
        let b = serde_json::to_string(&audit(&c).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spd_geometric_audit_passes() {
        let c = JobConfig {
            dim: 2,
            ..cfg("geometric", Space::Spd, 10)
        };
        let r = audit(&c).unwrap();
        assert!(r.all_pass(), "{:#?}", r.results);
        assert!(r.result("monotonicity").unwrap().pass);
    }
}
