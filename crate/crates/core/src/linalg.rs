//! Dense symmetric-matrix kernel for the positive-definite cone.
//!
//! Eigendecompositions use cyclic Jacobi rotations. Everything that returns a
//! nominally symmetric matrix re-symmetrizes it as (M + Mᵀ)/2 first, so drift
//! cannot build up across long iterations.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::engine::MetricSpace;
use crate::error::LinalgError;

/// Largest dimension accepted by default.
pub const MAX_DIM: usize = 64;

/// Relative definiteness floor: λ_min must exceed this times λ_max.
pub const DEFINITENESS_FLOOR: f64 = 1e-12;

/// Relative tolerance on |a_ij − a_ji| when validating symmetry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

const JACOBI_THRESHOLD: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric positive-definite matrix.
#[derive(Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl fmt::Debug for SpdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpdMatrix(")?;
        for i in 0..self.dim() {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.dim() {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self.0[(i, j)])?;
            }
        }
        write!(f, ")")
    }
}

impl SpdMatrix {
    /// Validates symmetry and positive definiteness.
    pub fn new(m: DMatrix<f64>) -> Result<Self, LinalgError> {
        check_square(&m)?;
        if m.nrows() > MAX_DIM {
            return Err(LinalgError::TooLarge {
                dim: m.nrows(),
                limit: MAX_DIM,
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::Numeric("matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = asymmetry(&m);
        if asym > SYMMETRY_TOLERANCE * scale {
            return Err(LinalgError::NotSymmetric { asymmetry: asym });
        }
        let m = symmetrize(m);
        let values = eigenvalues(&m);
        let (max, min) = (values[0], values[values.len() - 1]);
        if !(min > DEFINITENESS_FLOOR * max) {
            return Err(LinalgError::NotPositiveDefinite {
                min_eigenvalue: min,
                max_eigenvalue: max,
            });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix known to be SPD, symmetrizing it.
    pub(crate) fn trusted(m: DMatrix<f64>) -> Self {
        Self(symmetrize(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn scaled_identity(dim: usize, r: f64) -> Result<Self, LinalgError> {
        Self::new(DMatrix::identity(dim, dim) * r)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, LinalgError> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    /// Row-major entries.
    pub fn from_rows(dim: usize, entries: &[f64]) -> Result<Self, LinalgError> {
        if entries.len() != dim * dim {
            return Err(LinalgError::Shape {
                expected: format!("{} entries", dim * dim),
                got: format!("{}", entries.len()),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn inverse(&self) -> SpdMatrix {
        let e = self.eigen();
        Self::trusted(e.reconstruct(|l| 1.0 / l))
    }

    pub fn sqrt(&self) -> SpdMatrix {
        let e = self.eigen();
        Self::trusted(e.reconstruct(f64::sqrt))
    }

    pub fn scale(&self, r: f64) -> SpdMatrix {
        assert!(r > 0.0, "SPD matrices are closed under positive scaling only");
        Self(&self.0 * r)
    }

    /// Congruence C·A·Cᵀ for invertible C.
    pub fn congruence(&self, c: &DMatrix<f64>) -> Result<SpdMatrix, LinalgError> {
        if c.ncols() != self.dim() || c.nrows() != self.dim() {
            return Err(shape_error(self.dim(), c.nrows().max(c.ncols())));
        }
        SpdMatrix::new(c * &self.0 * c.transpose())
    }

    pub fn add(&self, other: &SpdMatrix) -> Result<SpdMatrix, LinalgError> {
        same_dim(self, other)?;
        Ok(Self::trusted(&self.0 + &other.0))
    }

    pub fn eigen(&self) -> SymEigen {
        jacobi(&self.0, true)
    }

    /// Largest and smallest eigenvalue.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let v = eigenvalues(&self.0);
        (v[0], v[v.len() - 1])
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Orthogonal; column i is the eigenvector of `values[i]`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// V·diag(f(λ))·Vᵀ
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let fl = f(l);
            for i in 0..n {
                scaled[(i, j)] *= fl;
            }
        }
        symmetrize(scaled * self.vectors.transpose())
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(LinalgError::Shape {
            expected: "non-empty square matrix".into(),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

fn shape_error(expected: usize, got: usize) -> LinalgError {
    LinalgError::Shape {
        expected: format!("{expected}x{expected}"),
        got: format!("{got}x{got}"),
    }
}

fn same_dim(a: &SpdMatrix, b: &SpdMatrix) -> Result<(), LinalgError> {
    if a.dim() != b.dim() {
        return Err(shape_error(a.dim(), b.dim()));
    }
    Ok(())
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Cyclic Jacobi on a copy of `a`. Sweeps until the off-diagonal Frobenius
/// norm falls to 1e-14 of the initial Frobenius norm, at most 100 sweeps.
fn jacobi(a: &DMatrix<f64>, want_vectors: bool) -> SymEigen {
    let n = a.nrows();
    // row-major working copy
    let mut w: Vec<f64> = a.transpose().as_slice().to_vec();
    let mut v: Vec<f64> = if want_vectors {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        v
    } else {
        Vec::new()
    };
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = JACOBI_THRESHOLD * norm;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += w[i * n + j] * w[i * n + j];
                }
            }
        }
        if off.sqrt() <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w[p * n + q];
                // entries this small cannot keep the off-diagonal norm above
                // the threshold on their own
                if apq.abs() * n as f64 <= threshold {
                    continue;
                }
                let theta = (w[q * n + q] - w[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Jᵀ·W·J only changes rows and columns p and q: rotate the
                // two rows, then mirror them into the columns
                let app = w[p * n + p] - t * apq;
                let aqq = w[q * n + q] + t * apq;
                rotate_rows(&mut w, n, p, q, c, s);
                for r in 0..n {
                    w[r * n + p] = w[p * n + r];
                    w[r * n + q] = w[q * n + r];
                }
                w[p * n + p] = app;
                w[q * n + q] = aqq;
                w[p * n + q] = 0.0;
                w[q * n + p] = 0.0;
                if want_vectors {
                    // row i of `v` holds eigenvector i
                    rotate_rows(&mut v, n, p, q, c, s);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[j * n + j].total_cmp(&w[i * n + i]));
    let values = order.iter().map(|&i| w[i * n + i]).collect();
    let vectors = if want_vectors {
        DMatrix::from_fn(n, n, |r, c| v[order[c] * n + r])
    } else {
        DMatrix::zeros(0, 0)
    };
    SymEigen { values, vectors }
}

/// Rows p < q of the row-major n×n matrix `m` become c·p − s·q and s·p + c·q.
fn rotate_rows(m: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = m.split_at_mut(q * n);
    let (row_p, row_q) = (&mut head[p * n..p * n + n], &mut tail[..n]);
    for (x, y) in row_p.iter_mut().zip(row_q.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

fn eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    jacobi(a, false).values
}

/// Eigendecomposition A = V·diag(λ)·Vᵀ of a symmetric matrix, λ descending.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen, LinalgError> {
    check_square(a)?;
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    Ok(jacobi(&symmetrize(a.clone()), true))
}

/// f applied to A through its spectrum: V·diag(f(λ))·Vᵀ.
pub fn matrix_function(a: &SpdMatrix, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>, LinalgError> {
    let e = a.eigen();
    for &l in &e.values {
        let fl = f(l);
        if !fl.is_finite() {
            return Err(LinalgError::Numeric(format!("function undefined at eigenvalue {l}")));
        }
    }
    Ok(e.reconstruct(f))
}

/// A ≤ B in the Löwner order, up to `slack` on the smallest eigenvalue of B − A.
pub fn loewner_leq(a: &SpdMatrix, b: &SpdMatrix, slack: f64) -> Result<bool, LinalgError> {
    Ok(loewner_margin(a, b)? >= -slack)
}

/// Smallest eigenvalue of B − A; nonnegative exactly when A ≤ B.
pub fn loewner_margin(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64, LinalgError> {
    same_dim(a, b)?;
    let diff = b.matrix() - a.matrix();
    let v = eigenvalues(&symmetrize(diff));
    Ok(v[v.len() - 1])
}

/// Spectrum of B^{-1/2}·A·B^{-1/2}, obtained as the spectrum of the
/// congruent matrix L⁻¹·A·L⁻ᵀ with B = L·Lᵀ.
fn relative_spectrum(a: &SpdMatrix, b: &SpdMatrix) -> Result<(f64, f64), LinalgError> {
    same_dim(a, b)?;
    let l = cholesky_factor(b)?;
    let w = whiten(&l, a.matrix());
    let v = eigenvalues(&w);
    Ok((v[0], v[v.len() - 1]))
}

pub(crate) fn cholesky_factor(b: &SpdMatrix) -> Result<DMatrix<f64>, LinalgError> {
    nalgebra::Cholesky::new(b.matrix().clone())
        .map(|c| c.unpack())
        .ok_or_else(|| LinalgError::Numeric("Cholesky factorization failed".into()))
}

/// L⁻¹·M·L⁻ᵀ for lower-triangular L and symmetric M.
pub(crate) fn whiten(l: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let x = l.solve_lower_triangular(m).expect("Cholesky factor is invertible");
    let w = l
        .solve_lower_triangular(&x.transpose())
        .expect("Cholesky factor is invertible");
    symmetrize(w)
}

/// M(A/B) = inf{λ > 0 : A ≤ λB}, the largest eigenvalue of B^{-1/2}AB^{-1/2}.
pub fn m_ratio(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64, LinalgError> {
    Ok(relative_spectrum(a, b)?.0)
}

/// Thompson metric max{log M(A/B), log M(B/A)}.
pub fn thompson_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64, LinalgError> {
    if a == b {
        return Ok(0.0);
    }
    let (hi, lo) = relative_spectrum(a, b)?;
    // M(B/A) = 1/λ_min(B^{-1/2}AB^{-1/2})
    Ok(hi.ln().max(-lo.ln()).max(0.0))
}

/// Whether d(A, B) ≤ t, decided by testing e^{-t}I ≤ B^{-1/2}AB^{-1/2} ≤ e^t·I
/// with two Cholesky factorizations instead of an eigensolve. Both shifted
/// matrices must be positive definite, so a boundary case reads as outside.
/// `None` when the whitened matrix is not finite.
pub fn thompson_within(a: &SpdMatrix, b: &SpdMatrix, t: f64) -> Result<Option<bool>, LinalgError> {
    same_dim(a, b)?;
    if a == b {
        return Ok(Some(t >= 0.0));
    }
    let w = whiten(&cholesky_factor(b)?, a.matrix());
    if !w.iter().all(|x| x.is_finite()) {
        return Ok(None);
    }
    let n = w.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let below = nalgebra::Cholesky::new(&eye * t.exp() - &w).is_some();
    Ok(Some(below && nalgebra::Cholesky::new(&w - eye * (-t).exp()).is_some()))
}

/// Order-unit norm inf{t ≥ 0 : −tI ≤ A ≤ tI} = max |λ|.
pub fn order_unit_norm(a: &DMatrix<f64>) -> Result<f64, LinalgError> {
    let e = sym_eigen(a)?;
    Ok(e.values.iter().fold(0.0f64, |m, l| m.max(l.abs())))
}

/// The order interval [(1/n)I, nI].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct OrderInterval {
    pub n: u32,
}

impl OrderInterval {
    pub fn new(n: u32) -> Result<Self, LinalgError> {
        if n == 0 {
            return Err(LinalgError::Numeric("order interval needs n ≥ 1".into()));
        }
        Ok(Self { n })
    }

    pub fn lower(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn upper(&self) -> f64 {
        self.n as f64
    }

    /// (1/n)I ≤ A ≤ nI, up to `slack` on the eigenvalues.
    pub fn contains(&self, a: &SpdMatrix, slack: f64) -> bool {
        let (hi, lo) = a.spectral_bounds();
        lo >= self.lower() - slack && hi <= self.upper() + slack
    }

    /// Smallest interval containing every matrix, from extreme eigenvalues.
    pub fn enclosing(mats: &[SpdMatrix]) -> Self {
        let spread = mats.iter().fold(1.0f64, |acc, m| {
            let (hi, lo) = m.spectral_bounds();
            acc.max(hi).max(1.0 / lo)
        });
        Self {
            n: (spread * (1.0 - 4.0 * f64::EPSILON)).ceil().max(1.0) as u32,
        }
    }
}

/// QᵀDQ with Q the orthogonal factor of a standard Gaussian matrix and D
/// log-uniform in [lo, hi].
pub fn random_spd_between<R: Rng + ?Sized>(rng: &mut R, dim: usize, lo: f64, hi: f64) -> SpdMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let (llo, lhi) = (lo.ln(), hi.ln());
    let d: Vec<f64> = (0..dim).map(|_| (llo + (lhi - llo) * rng.gen::<f64>()).exp()).collect();
    let mut qt_d = q.transpose();
    for (i, &di) in d.iter().enumerate() {
        for j in 0..dim {
            qt_d[(j, i)] *= di;
        }
    }
    SpdMatrix::trusted(qt_d * q)
}

/// A random SPD matrix whose spectrum lies in the given order interval.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, dim: usize, interval: OrderInterval) -> SpdMatrix {
    random_spd_between(rng, dim, interval.lower(), interval.upper())
}

/// The positive-definite cone under the Thompson metric.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpdSpace;

impl SpdSpace {
    pub fn shared() -> Arc<Self> {
        Arc::new(SpdSpace)
    }
}

impl MetricSpace for SpdSpace {
    type Point = SpdMatrix;

    fn distance(&self, a: &SpdMatrix, b: &SpdMatrix) -> f64 {
        thompson_distance(a, b).unwrap_or(f64::INFINITY)
    }

    fn resolution(&self, x: &SpdMatrix) -> f64 {
        64.0 * f64::EPSILON * x.dim() as f64
    }

    fn distance_over(&self, points: &[SpdMatrix], bound: f64) -> Option<f64> {
        for (i, a) in points.iter().enumerate() {
            for b in &points[i + 1..] {
                match thompson_within(a, b, bound) {
                    Ok(Some(true)) => {}
                    Ok(Some(false)) => return Some(bound.next_up()),
                    Ok(None) => return Some(f64::NAN),
                    Err(_) => return Some(f64::INFINITY),
                }
            }
        }
        None
    }
}
