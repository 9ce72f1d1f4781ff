//! Dense complex linear algebra used by every other module.
//!
//! All quantities are dimensionless with ħ = 1. Operators are thin newtypes
//! over `nalgebra` matrices whose constructors enforce the Hermiticity,
//! unitarity and normalization contracts.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

const HERMITIAN_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-12;

/// Relative tolerance under which two eigenvalues count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// `max |M - M†|` over entries.
pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut defect = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            defect = defect.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    defect
}

fn check_square_finite(m: &ComplexMatrix) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(QfiError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(QfiError::NonFinite);
    }
    Ok(())
}

fn symmetrize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Serialized form of a square matrix: `dim` plus row-major `[re, im]` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixRepr {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl From<&ComplexMatrix> for MatrixRepr {
    fn from(m: &ComplexMatrix) -> Self {
        let n = m.nrows();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        Self { dim: n, entries }
    }
}

impl TryFrom<MatrixRepr> for ComplexMatrix {
    type Error = QfiError;
    fn try_from(r: MatrixRepr) -> Result<Self> {
        if r.entries.len() != r.dim * r.dim {
            return Err(QfiError::DimMismatch {
                expected: r.dim * r.dim,
                found: r.entries.len(),
            });
        }
        Ok(DMatrix::from_row_iterator(
            r.dim,
            r.dim,
            r.entries.iter().map(|&[re, im]| Complex64::new(re, im)),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct HermitianOperator(ComplexMatrix);

impl HermitianOperator {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        check_square_finite(&m)?;
        let defect = hermiticity_defect(&m);
        if defect > HERMITIAN_TOL * (1.0 + max_abs(&m)) {
            return Err(QfiError::NotHermitian { defect });
        }
        Ok(Self(m))
    }

    /// Projects `m` onto its Hermitian part and reports the removed defect
    /// `max |M - M†| / 2`.
    pub fn symmetrized(m: &ComplexMatrix) -> Result<(Self, f64)> {
        check_square_finite(m)?;
        let defect = 0.5 * hermiticity_defect(m);
        Ok((Self(symmetrize(m)), defect))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&x| Complex64::new(x, 0.0)));
        Self::new(DMatrix::from_diagonal(&v))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    /// `|a⟩⟨a|`.
    pub fn projector(a: &PureState) -> Self {
        let v = a.amplitudes();
        Self(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    /// Real expectation value `⟨ψ|H|ψ⟩`.
    pub fn expectation(&self, psi: &PureState) -> Result<f64> {
        check_dims(self.dim(), psi.dim())?;
        let v = psi.amplitudes();
        Ok(v.dotc(&(&self.0 * v)).re)
    }

    /// `U† H U`, re-symmetrized against rounding.
    pub fn conjugate_by(&self, u: &Unitary) -> Self {
        let m = u.matrix().adjoint() * &self.0 * u.matrix();
        Self(symmetrize(&m))
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> Result<f64> {
        let e = eig_hermitian(self)?;
        Ok(e.values.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
    }
}

impl TryFrom<MatrixRepr> for HermitianOperator {
    type Error = QfiError;
    fn try_from(r: MatrixRepr) -> Result<Self> {
        Self::new(ComplexMatrix::try_from(r)?)
    }
}

impl From<HermitianOperator> for MatrixRepr {
    fn from(h: HermitianOperator) -> Self {
        MatrixRepr::from(&h.0)
    }
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: Self) -> HermitianOperator {
        HermitianOperator(&self.0 + &rhs.0)
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: Self) -> HermitianOperator {
        HermitianOperator(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, rhs: f64) -> HermitianOperator {
        self.scale(rhs)
    }
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(QfiError::DimMismatch { expected, found });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Unitary(ComplexMatrix);

impl Unitary {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        check_square_finite(&m)?;
        let defect = unitarity_defect(&m);
        if defect > UNITARY_TOL {
            return Err(QfiError::NotUnitary { defect });
        }
        Ok(Self(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// `later · self`, i.e. evolution by `self` followed by `later`.
    pub fn then(&self, later: &Unitary) -> Self {
        Self(&later.0 * &self.0)
    }

    pub fn apply(&self, psi: &PureState) -> Result<PureState> {
        check_dims(self.dim(), psi.dim())?;
        Ok(PureState(&self.0 * psi.amplitudes()))
    }

    pub fn defect(&self) -> f64 {
        unitarity_defect(&self.0)
    }
}

/// `max |U†U - I|`.
pub fn unitarity_defect(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let p = m.adjoint() * m;
    let mut d = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { ONE } else { ZERO };
            d = d.max((p[(i, j)] - target).norm());
        }
    }
    d
}

#[derive(Clone, Debug, PartialEq)]
pub struct PureState(ComplexVector);

impl PureState {
    pub fn new(v: ComplexVector) -> Result<Self> {
        if v.is_empty() || v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QfiError::NonFinite);
        }
        let norm = v.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(QfiError::NotNormalized { norm });
        }
        Ok(Self(v))
    }

    /// Normalizes `v`; fails on a zero or non-finite vector.
    pub fn normalized(v: ComplexVector) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(QfiError::NotNormalized { norm });
        }
        Ok(Self(v.unscale(norm)))
    }

    pub fn from_slice(amps: &[Complex64]) -> Result<Self> {
        Self::normalized(DVector::from_column_slice(amps))
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[k] = ONE;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &ComplexVector {
        &self.0
    }

    pub fn into_amplitudes(self) -> ComplexVector {
        self.0
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.0.dotc(&other.0)
    }

    pub fn with_phase(&self, phase: Complex64) -> Self {
        Self(self.0.map(|z| z * phase))
    }
}

/// Eigendecomposition of a Hermitian operator with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, in the order of `values`.
    pub vectors: ComplexMatrix,
    /// Set when two eigenvalues agree within [`DEGENERACY_TOL`].
    pub degenerate: bool,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> ComplexVector {
        self.vectors.column(k).into_owned()
    }

    /// Groups of consecutive indices whose eigenvalues are degenerate.
    pub fn clusters(&self) -> Vec<std::ops::Range<usize>> {
        let tol = degeneracy_tol(&self.values);
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=self.values.len() {
            if k == self.values.len() || self.values[k] - self.values[k - 1] > tol {
                out.push(start..k);
                start = k;
            }
        }
        out
    }
}

fn degeneracy_tol(values: &[f64]) -> f64 {
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    DEGENERACY_TOL * (1.0 + scale)
}

pub fn eig_hermitian(h: &HermitianOperator) -> Result<Eigen> {
    let m = h.matrix();
    let (values, vectors) = match m.nrows() {
        1 => (vec![m[(0, 0)].re], DMatrix::identity(1, 1)),
        2 => eig_2x2(m),
        n => {
            let eig = SymmetricEigen::try_new(m.clone(), 1e-15, 10_000 * n)
                .ok_or(QfiError::NoConvergence)?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
            let mut vectors = DMatrix::zeros(n, n);
            for (dst, &src) in order.iter().enumerate() {
                vectors.set_column(dst, &eig.eigenvectors.column(src));
            }
            (values, vectors)
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(QfiError::NoConvergence);
    }
    let tol = degeneracy_tol(&values);
    let degenerate = values.windows(2).any(|w| w[1] - w[0] <= tol);
    Ok(Eigen {
        values,
        vectors,
        degenerate,
    })
}

/// Closed-form 2x2 Hermitian eigensystem.
fn eig_2x2(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)].conj());
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let r = half.hypot(b.norm());
    if r <= f64::EPSILON * (mean.abs() + r) || r == 0.0 {
        return (vec![mean, mean], DMatrix::identity(2, 2));
    }
    let (u0, u1) = if half >= 0.0 {
        (Complex64::new(r + half, 0.0), b.conj())
    } else {
        (b, Complex64::new(r - half, 0.0))
    };
    let norm = (u0.norm_sqr() + u1.norm_sqr()).sqrt();
    let (u0, u1) = (u0 / norm, u1 / norm);
    let vectors = DMatrix::from_row_slice(2, 2, &[-u1.conj(), u0, u0.conj(), u1]);
    (vec![mean - r, mean + r], vectors)
}

/// Rebuilds `V diag(f(λ)) V†` from an eigendecomposition.
pub fn spectral_map(eig: &Eigen, f: impl Fn(f64) -> Complex64) -> ComplexMatrix {
    let n = eig.values.len();
    let mut scaled = eig.vectors.clone();
    for k in 0..n {
        let w = f(eig.values[k]);
        for i in 0..n {
            scaled[(i, k)] *= w;
        }
    }
    scaled * eig.vectors.adjoint()
}

/// `exp(-i H s)`, computed in the eigenbasis of `H`.
pub fn expm_i(h: &HermitianOperator, s: f64) -> Result<Unitary> {
    if !s.is_finite() {
        return Err(QfiError::InvalidArgument(format!("non-finite time {s}")));
    }
    let eig = eig_hermitian(h)?;
    Ok(Unitary(spectral_map(&eig, |l| Complex64::from_polar(1.0, -l * s))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

pub fn pauli(axis: Axis) -> HermitianOperator {
    let m = match axis {
        Axis::X => [ZERO, ONE, ONE, ZERO],
        Axis::Y => [ZERO, -I, I, ZERO],
        Axis::Z => [ONE, ZERO, ZERO, -ONE],
    };
    HermitianOperator(DMatrix::from_row_slice(2, 2, &m))
}

/// `x σx + y σy + z σz`.
pub fn bloch_operator(x: f64, y: f64, z: f64) -> HermitianOperator {
    HermitianOperator(DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(z, 0.0),
            Complex64::new(x, -y),
            Complex64::new(x, y),
            Complex64::new(-z, 0.0),
        ],
    ))
}

/// Fixes the global phase of `v` so that its first component with
/// `|v_i|² ≥ 1/(2 dim)` is real and positive.
pub fn canonical_phase(v: &ComplexVector) -> ComplexVector {
    let threshold = 0.5 / v.len() as f64 * v.norm_squared();
    match v.iter().find(|z| z.norm_sqr() >= threshold) {
        Some(z) if z.norm() > 0.0 => {
            let phase = z.conj() / z.norm();
            v.map(|c| c * phase)
        }
        _ => v.clone(),
    }
}

/// Elementwise maximum distance between two matrices.
pub fn max_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn reconstruct(e: &Eigen) -> ComplexMatrix {
        spectral_map(e, |l| c(l, 0.0))
    }

    fn check_eigensystem(h: &HermitianOperator) {
        let e = eig_hermitian(h).unwrap();
        let n = h.dim();
        let scale = 1.0 + h.max_abs();
        for k in 0..n {
            let v = e.vector(k);
            let hv = h.matrix() * &v;
            let resid = (&hv - v.scale(e.values[k])).norm();
            assert!(resid <= 1e-10 * scale, "residual {resid}");
        }
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        assert!(unitarity_defect(&e.vectors) <= 1e-10);
        assert!(max_distance(&reconstruct(&e), h.matrix()) <= 1e-10 * scale);
    }

    #[test]
    fn pauli_spectra() {
        let z = eig_hermitian(&pauli(Axis::Z)).unwrap();
        assert_eq!(z.values, vec![-1.0, 1.0]);
        assert!((z.vectors[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((z.vectors[(0, 1)].norm() - 1.0).abs() < 1e-15);

        let x = eig_hermitian(&pauli(Axis::X)).unwrap();
        assert!((x.values[0] + 1.0).abs() < 1e-15 && (x.values[1] - 1.0).abs() < 1e-15);
        let minus = canonical_phase(&x.vector(0));
        let plus = canonical_phase(&x.vector(1));
        assert!((minus[0] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-14);
        assert!((minus[1] - c(-FRAC_1_SQRT_2, 0.0)).norm() < 1e-14);
        assert!((plus[0] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-14);
        assert!((plus[1] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn rotating_field_spectrum_is_pm_one() {
        for &t in &[0.0, 0.3, 1.7, 12.5] {
            let (s, co) = f64::sin_cos(t);
            let h = bloch_operator(-co, 0.0, -s);
            let e = eig_hermitian(&h).unwrap();
            assert!((e.values[0] + 1.0).abs() < 1e-14);
            assert!((e.values[1] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn pauli_matrices() {
        assert_eq!(pauli(Axis::X).matrix()[(0, 1)], ONE);
        assert_eq!(pauli(Axis::Y).matrix()[(0, 1)], -I);
        assert_eq!(pauli(Axis::Y).matrix()[(1, 0)], I);
        assert_eq!(pauli(Axis::Z).matrix()[(1, 1)], -ONE);
    }

    #[test]
    fn general_eigensystems() {
        let h3 = HermitianOperator::new(DMatrix::from_row_slice(
            3,
            3,
            &[
                c(2.0, 0.0),
                c(0.5, -0.25),
                c(0.0, 1.0),
                c(0.5, 0.25),
                c(-1.0, 0.0),
                c(0.3, 0.0),
                c(0.0, -1.0),
                c(0.3, 0.0),
                c(0.7, 0.0),
            ],
        ))
        .unwrap();
        check_eigensystem(&h3);
        check_eigensystem(&bloch_operator(0.3, -1.2, 0.4));
        check_eigensystem(&bloch_operator(0.0, 0.0, -2.0));
        check_eigensystem(&HermitianOperator::identity(4));
    }

    #[test]
    fn degeneracy_is_flagged() {
        let e = eig_hermitian(&HermitianOperator::from_real_diagonal(&[1.0, 0.0, 1.0]).unwrap())
            .unwrap();
        assert!(e.degenerate);
        assert_eq!(e.clusters(), vec![0..1, 1..3]);
        let e = eig_hermitian(&pauli(Axis::X)).unwrap();
        assert!(!e.degenerate);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(
            HermitianOperator::new(m),
            Err(QfiError::NotHermitian { .. })
        ));
        let m = DMatrix::from_row_slice(2, 2, &[c(f64::NAN, 0.0), ZERO, ZERO, ONE]);
        assert_eq!(HermitianOperator::new(m), Err(QfiError::NonFinite));
    }

    #[test]
    fn exponential_identities() {
        let zero = expm_i(&HermitianOperator::zeros(2), 1.0).unwrap();
        assert!(max_distance(zero.matrix(), &DMatrix::identity(2, 2)) < 1e-15);

        let u = expm_i(&pauli(Axis::Y), FRAC_PI_2).unwrap();
        let expected = pauli(Axis::Y).matrix().map(|z| z * -I);
        assert!(max_distance(u.matrix(), &expected) < 1e-15);
    }

    #[test]
    fn exponential_matches_taylor_reference() {
        // Independent route: scaling and squaring with a truncated Taylor series.
        let h = &pauli(Axis::X) + &pauli(Axis::Z);
        let s = 0.3;
        let a = h.matrix().map(|z| z * (-I * s / 1024.0));
        let mut term = DMatrix::<Complex64>::identity(2, 2);
        let mut sum = term.clone();
        for k in 1..20 {
            term = &term * &a / Complex64::new(k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..10 {
            sum = &sum * &sum;
        }
        let u = expm_i(&h, s).unwrap();
        assert!(max_distance(u.matrix(), &sum) < 1e-12);
    }

    #[test]
    fn state_contracts() {
        assert!(matches!(
            PureState::new(DVector::from_vec(vec![ONE, ONE])),
            Err(QfiError::NotNormalized { .. })
        ));
        let s = PureState::from_slice(&[ONE, I]).unwrap();
        assert!((s.amplitudes().norm() - 1.0).abs() < 1e-15);
        assert!(PureState::normalized(DVector::zeros(2)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn hermitian(n: usize) -> impl Strategy<Value = HermitianOperator> {
            proptest::collection::vec(-3.0f64..3.0, 2 * n * n).prop_map(move |xs| {
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] = Complex64::new(xs[2 * (i * n + j)], xs[2 * (i * n + j) + 1]);
                    }
                }
                HermitianOperator::symmetrized(&m).unwrap().0
            })
        }

        proptest! {
            #[test]
            fn eigen_reconstructs(h in (1usize..6).prop_flat_map(hermitian)) {
                check_eigensystem(&h);
            }

            #[test]
            fn exponential_is_unitary_and_adjoint_reverses(
                h in (1usize..5).prop_flat_map(hermitian),
                s in -4.0f64..4.0,
            ) {
                let u = expm_i(&h, s).unwrap();
                prop_assert!(u.defect() <= 1e-10);
                let back = expm_i(&h, -s).unwrap();
                prop_assert!(max_distance(u.adjoint().matrix(), back.matrix()) <= 1e-12);
            }

            #[test]
            fn exponential_composes(
                h in (1usize..5).prop_flat_map(hermitian),
                s1 in -2.0f64..2.0,
                s2 in -2.0f64..2.0,
            ) {
                let a = expm_i(&h, s1).unwrap();
                let b = expm_i(&h, s2).unwrap();
                let ab = expm_i(&h, s1 + s2).unwrap();
                prop_assert!(max_distance(a.then(&b).matrix(), ab.matrix()) <= 1e-10);
            }
        }
    }
}
