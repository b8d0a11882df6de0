//! Two-variable means of positive-definite matrices under the Thompson metric.
//!
//! The geometric and Kubo–Ando means are evaluated through a Cholesky factor
//! A = L·Lᵀ as L·f(L⁻¹·B·L⁻ᵀ)·Lᵀ. Since L = A^{1/2}·U for an orthogonal U,
//! this agrees with A^{1/2}·f(A^{-1/2}·B·A^{-1/2})·A^{1/2} and needs one
//! eigendecomposition instead of two.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::engine::MeanSpec;
use crate::error::{LinalgError, MeanError};
use crate::linalg::{
    cholesky_factor, random_spd, symmetrize, thompson_distance, whiten, OrderInterval, SpdMatrix, SpdSpace,
};
use crate::scalar::RepresentingFunction;

/// Inflation applied to an empirical contraction estimate before it is used
/// as a certificate.
pub const CERTIFICATE_INFLATION: f64 = 1.05;

fn check_dims(a: &SpdMatrix, b: &SpdMatrix) -> Result<(), LinalgError> {
    if a.dim() != b.dim() {
        return Err(LinalgError::Shape {
            expected: format!("{0}x{0}", a.dim()),
            got: format!("{0}x{0}", b.dim()),
        });
    }
    Ok(())
}

/// (A + B)/2
pub fn op_arithmetic(a: &SpdMatrix, b: &SpdMatrix) -> Result<SpdMatrix, LinalgError> {
    check_dims(a, b)?;
    Ok(SpdMatrix::trusted((a.matrix() + b.matrix()) * 0.5))
}

/// 2(A⁻¹ + B⁻¹)⁻¹, computed as the inverse of the arithmetic mean of the
/// inverses.
pub fn op_harmonic(a: &SpdMatrix, b: &SpdMatrix) -> Result<SpdMatrix, LinalgError> {
    check_dims(a, b)?;
    Ok(op_arithmetic(&a.inverse(), &b.inverse())?.inverse())
}

/// A # B = A^{1/2}(A^{-1/2}BA^{-1/2})^{1/2}A^{1/2}
pub fn op_geometric(a: &SpdMatrix, b: &SpdMatrix) -> Result<SpdMatrix, LinalgError> {
    check_dims(a, b)?;
    if a == b {
        return Ok(a.clone());
    }
    let l = cholesky_factor(a)?;
    let w = SpdMatrix::trusted(whiten(&l, b.matrix()));
    // L·W^{1/2}·Lᵀ = M·Mᵀ with M = L·V·diag(λ^{1/4})
    let e = w.eigen();
    let mut m = l * e.vectors;
    for (mut col, &x) in m.column_iter_mut().zip(&e.values) {
        col *= x.sqrt().sqrt();
    }
    Ok(SpdMatrix::trusted(&m * m.transpose()))
}

/// A^{1/2}·f(A^{-1/2}BA^{-1/2})·A^{1/2} for a representing function f.
///
/// The result is validated as positive definite, so a representing function
/// that is not positive on the relative spectrum yields an error.
pub fn kubo_ando(f: &RepresentingFunction, a: &SpdMatrix, b: &SpdMatrix) -> Result<SpdMatrix, LinalgError> {
    check_dims(a, b)?;
    let l = cholesky_factor(a)?;
    let w = SpdMatrix::trusted(whiten(&l, b.matrix()));
    let e = w.eigen();
    for &x in &e.values {
        let fx = f.eval(x);
        if !fx.is_finite() {
            return Err(LinalgError::Numeric(format!(
                "representing function {} is undefined at {x}",
                f.label()
            )));
        }
    }
    let fw = e.reconstruct(|x| f.eval(x));
    SpdMatrix::new(symmetrize(&l * fw * l.transpose()))
}

/// Matrix 2-mean from a binary kernel, with arity checking done by
/// [`MeanSpec::evaluate`].
pub fn binary_op_mean<F>(name: &str, symmetric: bool, f: F) -> MeanSpec<SpdSpace>
where
    F: Fn(&SpdMatrix, &SpdMatrix) -> Result<SpdMatrix, LinalgError> + Send + Sync + 'static,
{
    MeanSpec::new(name, SpdSpace::shared(), 2, symmetric, move |p: &[SpdMatrix]| {
        Ok(f(&p[0], &p[1])?)
    })
}

/// The Kubo–Ando mean of `f` as a [`MeanSpec`]. Symmetry is declared when
/// x·f(1/x) = f(x) on a test grid.
pub fn kubo_ando_mean(f: RepresentingFunction) -> MeanSpec<SpdSpace> {
    let symmetric = [0.1, 0.5, 2.0, 7.0]
        .iter()
        .all(|&x| (x * f.eval(1.0 / x) - f.eval(x)).abs() <= 1e-12 * f.eval(x).abs().max(1.0));
    let name = format!("kubo_ando:{}", f.label());
    binary_op_mean(&name, symmetric, move |a, b| kubo_ando(&f, a, b))
}

/// (A, B) ↦ A, a test fixture.
pub fn op_left_trivial_mean() -> MeanSpec<SpdSpace> {
    binary_op_mean("left", false, |a, b| {
        check_dims(a, b)?;
        Ok(a.clone())
    })
}

/// Where a contraction constant has been established.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    /// `None` for a constant that holds on the whole cone.
    pub interval: Option<OrderInterval>,
    pub rho: f64,
}

/// A matrix mean together with an optional contraction certificate.
#[derive(Debug, Clone)]
pub struct OperatorMeanSpec {
    mean: MeanSpec<SpdSpace>,
    certificate: Option<Certificate>,
}

impl OperatorMeanSpec {
    pub fn new(mean: MeanSpec<SpdSpace>) -> Self {
        Self {
            mean,
            certificate: None,
        }
    }

    pub fn arithmetic() -> Self {
        Self::new(binary_op_mean("arithmetic", true, op_arithmetic))
    }

    pub fn harmonic() -> Self {
        Self::new(binary_op_mean("harmonic", true, op_harmonic))
    }

    /// Carries the global constant 1/2 of a convex mean.
    pub fn geometric() -> Self {
        let mut m = Self::new(binary_op_mean("geometric", true, op_geometric));
        m.set_certificate(Certificate {
            interval: None,
            rho: 0.5,
        });
        m
    }

    pub fn kubo_ando(f: RepresentingFunction) -> Self {
        Self::new(kubo_ando_mean(f))
    }

    pub fn mean(&self) -> &MeanSpec<SpdSpace> {
        &self.mean
    }

    pub fn into_mean(self) -> MeanSpec<SpdSpace> {
        self.mean
    }

    pub fn certificate(&self) -> Option<Certificate> {
        self.certificate
    }

    /// Records a certificate and declares its constant on the mean.
    pub fn set_certificate(&mut self, certificate: Certificate) {
        self.mean = self.mean.clone().with_rho(certificate.rho);
        self.certificate = Some(certificate);
    }

    /// Certifies on `interval` from `samples` triples of dimension `dim`,
    /// using the empirical estimate inflated by [`CERTIFICATE_INFLATION`].
    /// A global certificate is kept as is. Fails when the inflated estimate
    /// is not below 1.
    pub fn certified_on(
        mut self,
        interval: OrderInterval,
        dim: usize,
        samples: usize,
        seed: u64,
    ) -> Result<Self, MeanError> {
        if matches!(self.certificate, Some(Certificate { interval: None, .. })) {
            return Ok(self);
        }
        let est = certify_contraction(&self.mean, interval, dim, samples, seed)?;
        let rho = est.rho * CERTIFICATE_INFLATION;
        if rho >= 1.0 {
            return Err(MeanError::InvalidParameter(format!(
                "{} is not certified contractive on [1/{n}, {n}]: estimate {}",
                self.mean.name(),
                est.rho,
                n = interval.n
            )));
        }
        self.set_certificate(Certificate {
            interval: Some(interval),
            rho,
        });
        Ok(self)
    }
}

/// Result of [`certify_contraction`].
#[derive(Debug, Clone)]
pub struct ContractionEstimate {
    /// Largest observed d(μ(A,B), μ(A,C)) / d(B,C).
    pub rho: f64,
    /// The triple (A, B, C) attaining it.
    pub witness: (SpdMatrix, SpdMatrix, SpdMatrix),
    pub samples: usize,
}

/// Empirical supremum of d(μ(A,B), μ(A,C)) / d(B,C) over random triples in
/// `interval`. Sample i draws from a generator seeded with `seed + i`.
pub fn certify_contraction(
    mean: &MeanSpec<SpdSpace>,
    interval: OrderInterval,
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<ContractionEstimate, MeanError> {
    if samples == 0 {
        return Err(MeanError::InvalidParameter(
            "certification needs at least one sample".into(),
        ));
    }
    if mean.arity() != 2 {
        return Err(MeanError::Arity {
            expected: 2,
            got: mean.arity(),
        });
    }
    let mut best: Option<ContractionEstimate> = None;
    for i in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let a = random_spd(&mut rng, dim, interval);
        let b = random_spd(&mut rng, dim, interval);
        let c = random_spd(&mut rng, dim, interval);
        let dbc = thompson_distance(&b, &c)?;
        if dbc == 0.0 {
            continue;
        }
        let ab = mean.evaluate(&[a.clone(), b.clone()])?;
        let ac = mean.evaluate(&[a.clone(), c.clone()])?;
        let ratio = thompson_distance(&ab, &ac)? / dbc;
        if best.as_ref().is_none_or(|e| ratio > e.rho) {
            best = Some(ContractionEstimate {
                rho: ratio,
                witness: (a, b, c),
                samples,
            });
        }
    }
    best.ok_or_else(|| MeanError::InvalidParameter("every sampled pair coincided".into()))
}

/// Largest entrywise deviation |a_ij − b_ij|.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(d: &[f64]) -> SpdMatrix {
        SpdMatrix::from_diagonal(d).unwrap()
    }

    #[test]
    fn arithmetic_examples() {
        let i = SpdMatrix::identity(2);
        assert_eq!(op_arithmetic(&i, &i).unwrap(), i);
        assert_eq!(
            op_arithmetic(&diag(&[1.0, 2.0]), &diag(&[3.0, 4.0])).unwrap(),
            diag(&[2.0, 3.0])
        );
        assert!(op_arithmetic(&i, &SpdMatrix::identity(3)).is_err());
    }

    #[test]
    fn harmonic_of_commuting_diagonals() {
        let h = op_harmonic(&diag(&[2.0, 5.0]), &diag(&[2.0 / 3.0, 1.0])).unwrap();
        assert_relative_eq!(h.matrix()[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(h.matrix()[(1, 1)], 10.0 / 6.0, epsilon = 1e-14);
        assert!(h.matrix()[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn geometric_examples() {
        let a = SpdMatrix::from_rows(2, &[2.0, 0.3, 0.3, 1.0]).unwrap();
        assert_eq!(op_geometric(&a, &a).unwrap(), a);
        let g = op_geometric(&diag(&[1.0, 4.0]), &diag(&[4.0, 1.0])).unwrap();
        assert_relative_eq!(*g.matrix(), *diag(&[2.0, 2.0]).matrix(), epsilon = 1e-14);
    }

    #[test]
    fn kubo_ando_reproduces_named_means() {
        let a = SpdMatrix::from_rows(2, &[2.0, 0.3, 0.3, 1.0]).unwrap();
        let b = SpdMatrix::from_rows(2, &[1.0, -0.4, -0.4, 3.0]).unwrap();
        let cases = [
            (RepresentingFunction::arithmetic(), op_arithmetic(&a, &b).unwrap()),
            (RepresentingFunction::geometric(), op_geometric(&a, &b).unwrap()),
            (RepresentingFunction::harmonic(), op_harmonic(&a, &b).unwrap()),
            (RepresentingFunction::right_trivial(), b.clone()),
        ];
        for (f, expected) in cases {
            let got = kubo_ando(&f, &a, &b).unwrap();
            assert!(max_abs_diff(got.matrix(), expected.matrix()) < 1e-13, "{}", f.label());
        }
    }

    #[test]
    fn kubo_ando_symmetry_detection() {
        assert!(kubo_ando_mean(RepresentingFunction::geometric()).is_symmetric());
        assert!(kubo_ando_mean(RepresentingFunction::logarithmic()).is_symmetric());
        assert!(!kubo_ando_mean(RepresentingFunction::right_trivial()).is_symmetric());
    }

    #[test]
    fn kubo_ando_rejects_bad_functions() {
        let a = SpdMatrix::identity(2);
        let b = diag(&[2.0, 3.0]);
        let bad = RepresentingFunction::new("nan", |x| if x > 2.5 { f64::NAN } else { x });
        assert!(kubo_ando(&bad, &a, &b).is_err());
        let negative = RepresentingFunction::new("neg", |x| 2.0 - x);
        assert!(kubo_ando(&negative, &a, &b).is_err());
    }

    #[test]
    fn certificates() {
        let iv = OrderInterval::new(2).unwrap();
        let g = OperatorMeanSpec::geometric();
        let est = certify_contraction(g.mean(), iv, 3, 30, 1).unwrap();
        assert!(est.rho <= 0.5 + 1e-9);
        assert_eq!(g.certificate().unwrap().rho, 0.5);

        let a = OperatorMeanSpec::arithmetic().certified_on(iv, 3, 30, 1).unwrap();
        let cert = a.certificate().unwrap();
        assert!(cert.rho < 1.0);
        assert_eq!(cert.interval, Some(iv));
        assert_eq!(a.mean().declared_rho(), Some(cert.rho));

        let left = certify_contraction(&op_left_trivial_mean(), iv, 3, 10, 1).unwrap();
        assert_eq!(left.rho, 0.0);
        assert!(certify_contraction(g.mean(), iv, 3, 0, 1).is_err());
    }
}
