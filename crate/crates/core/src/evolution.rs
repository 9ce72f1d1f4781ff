//! Time-ordered propagation under a parametrized Hamiltonian and the
//! generator `h_g = i U† ∂_g U`.
//!
//! The propagator is a product of slice exponentials `exp(-i H(t*_j) Δt)`,
//! later slices multiplied on the left. The generator is accumulated from
//! the exact parameter derivative of each slice exponential,
//!
//! ```text
//! h_g = Σ_j U_j† [∫_0^Δt e^{iH_j s} ∂_gH_j e^{-iH_j s} ds] U_j,
//! ```
//!
//! with `U_j` the partial product before slice `j`. This is the discrete
//! form of `∫_0^T U†(0→t) ∂_gH(t) U(0→t) dt` and equals `i U† ∂_g U` of the
//! discrete propagator to rounding.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};
use crate::operator_algebra::{
    eig_hermitian, spectral_map, ComplexMatrix, Eigen, HermitianOperator, PureState, Unitary, I,
};

/// Slices per unit time used by [`TimeGrid::auto`].
pub const DEFAULT_STEPS_PER_UNIT_TIME: f64 = 4096.0;

/// A family `(t, g) ↦ H_g(t)` together with its parameter derivative.
pub trait HamiltonianFamily: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, t: f64, g: f64) -> Result<HermitianOperator>;

    /// `∂_g H_g(t)`.
    fn evaluate_dg(&self, t: f64, g: f64) -> Result<HermitianOperator>;

    /// `false` when [`Self::evaluate_dg`] is a finite-difference fallback.
    fn has_analytic_dg(&self) -> bool {
        true
    }

    /// `∂_t ∂_g H_g(t)` when known in closed form. Control synthesis
    /// differentiates `∂_gH` numerically otherwise.
    fn evaluate_dg_dt(&self, _t: f64, _g: f64) -> Option<Result<HermitianOperator>> {
        None
    }
}

impl<F: HamiltonianFamily + ?Sized> HamiltonianFamily for Arc<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, t: f64, g: f64) -> Result<HermitianOperator> {
        (**self).evaluate(t, g)
    }
    fn evaluate_dg(&self, t: f64, g: f64) -> Result<HermitianOperator> {
        (**self).evaluate_dg(t, g)
    }
    fn has_analytic_dg(&self) -> bool {
        (**self).has_analytic_dg()
    }
    fn evaluate_dg_dt(&self, t: f64, g: f64) -> Option<Result<HermitianOperator>> {
        (**self).evaluate_dg_dt(t, g)
    }
}

impl<F: HamiltonianFamily + ?Sized> HamiltonianFamily for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, t: f64, g: f64) -> Result<HermitianOperator> {
        (**self).evaluate(t, g)
    }
    fn evaluate_dg(&self, t: f64, g: f64) -> Result<HermitianOperator> {
        (**self).evaluate_dg(t, g)
    }
    fn has_analytic_dg(&self) -> bool {
        (**self).has_analytic_dg()
    }
    fn evaluate_dg_dt(&self, t: f64, g: f64) -> Option<Result<HermitianOperator>> {
        (**self).evaluate_dg_dt(t, g)
    }
}

type MatrixFn = dyn Fn(f64, f64) -> ComplexMatrix + Send + Sync;

/// A family given by closures. Without an explicit derivative the
/// g-derivative falls back to a centered difference with step
/// `1e-6 (1 + |g|)`.
pub struct FnFamily {
    dim: usize,
    h: Box<MatrixFn>,
    dh: Option<Box<MatrixFn>>,
    dh_dt: Option<Box<MatrixFn>>,
}

impl FnFamily {
    pub fn new(
        dim: usize,
        h: impl Fn(f64, f64) -> ComplexMatrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            h: Box::new(h),
            dh: None,
            dh_dt: None,
        }
    }

    pub fn with_derivative(
        mut self,
        dh: impl Fn(f64, f64) -> ComplexMatrix + Send + Sync + 'static,
    ) -> Self {
        self.dh = Some(Box::new(dh));
        self
    }

    /// Supplies `∂_t ∂_g H` for control synthesis.
    pub fn with_time_derivative(
        mut self,
        dh_dt: impl Fn(f64, f64) -> ComplexMatrix + Send + Sync + 'static,
    ) -> Self {
        self.dh_dt = Some(Box::new(dh_dt));
        self
    }

    fn checked(&self, m: ComplexMatrix) -> Result<HermitianOperator> {
        if m.nrows() != self.dim {
            return Err(QfiError::DimMismatch {
                expected: self.dim,
                found: m.nrows(),
            });
        }
        HermitianOperator::new(m)
    }
}

impl HamiltonianFamily for FnFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, t: f64, g: f64) -> Result<HermitianOperator> {
        self.checked((self.h)(t, g))
    }

    fn evaluate_dg(&self, t: f64, g: f64) -> Result<HermitianOperator> {
        match &self.dh {
            Some(dh) => self.checked(dh(t, g)),
            None => {
                let step = 1e-6 * (1.0 + g.abs());
                let m = ((self.h)(t, g + step) - (self.h)(t, g - step)) / Complex64::new(2.0 * step, 0.0);
                Ok(HermitianOperator::symmetrized(&m)?.0)
            }
        }
    }

    fn has_analytic_dg(&self) -> bool {
        self.dh.is_some()
    }

    fn evaluate_dg_dt(&self, t: f64, g: f64) -> Option<Result<HermitianOperator>> {
        self.dh_dt.as_ref().map(|f| self.checked(f(t, g)))
    }
}

/// Where each slice samples the Hamiltonian.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingRule {
    #[default]
    Midpoint,
    /// Left endpoint of each slice, as in the plain first-order product.
    LeftEndpoint,
}

/// Uniform grid `t_j = t0 + j (t1 - t0) / steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    steps: usize,
    #[serde(default)]
    rule: SamplingRule,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t1 <= t0 {
            return Err(QfiError::InvalidGrid(format!("need t1 > t0, got [{t0}, {t1}]")));
        }
        if steps == 0 {
            return Err(QfiError::InvalidGrid("steps must be at least 1".into()));
        }
        Ok(Self {
            t0,
            t1,
            steps,
            rule: SamplingRule::Midpoint,
        })
    }

    /// `[0, duration]` with `ceil(steps_per_unit * duration)` slices.
    pub fn with_density(duration: f64, steps_per_unit: f64) -> Result<Self> {
        let steps = (steps_per_unit * duration).ceil().max(1.0) as usize;
        Self::new(0.0, duration, steps)
    }

    /// Default resolution: 4096 slices per unit time, scaled by the largest
    /// spectral norm of `H` seen on a coarse probe of the interval.
    pub fn auto(fam: &dyn HamiltonianFamily, g: f64, t0: f64, t1: f64) -> Result<Self> {
        let mut norm = 0.0_f64;
        for k in 0..=16 {
            let t = t0 + (t1 - t0) * k as f64 / 16.0;
            norm = norm.max(fam.evaluate(t, g)?.spectral_norm()?);
        }
        let steps = (DEFAULT_STEPS_PER_UNIT_TIME * (t1 - t0) * norm.max(1.0)).ceil() as usize;
        Self::new(t0, t1, steps.max(1))
    }

    pub fn with_rule(mut self, rule: SamplingRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn rule(&self) -> SamplingRule {
        self.rule
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.steps {
            self.t1
        } else {
            self.t0 + j as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|j| self.node(j))
    }

    /// Time at which slice `j` samples the Hamiltonian.
    pub fn sample_time(&self, j: usize) -> f64 {
        match self.rule {
            SamplingRule::Midpoint => self.t0 + (j as f64 + 0.5) * self.dt(),
            SamplingRule::LeftEndpoint => self.node(j),
        }
    }

    pub fn sample_times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.steps).map(|j| self.sample_time(j))
    }

    /// Same span with `factor` times as many slices.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Ok(Self::new(self.t0, self.t1, self.steps * factor.max(1))?.with_rule(self.rule))
    }
}

/// Propagator and generator from one pass over the grid.
#[derive(Clone, Debug)]
pub struct Evolution {
    pub unitary: Unitary,
    pub generator: HermitianOperator,
}

/// `∫_0^Δt e^{i(a-b)s} ds`, stable as `a → b`.
fn phase_integral(diff: f64, dt: f64) -> Complex64 {
    let half = 0.5 * diff * dt;
    let sinc = if half.abs() < 1e-4 {
        1.0 - half * half / 6.0
    } else {
        half.sin() / half
    };
    Complex64::from_polar(dt * sinc, half)
}

fn slice_exponential(eig: &Eigen, dt: f64) -> ComplexMatrix {
    spectral_map(eig, |l| Complex64::from_polar(1.0, -l * dt))
}

/// `i V† ∂_g V` for `V = exp(-i H Δt)`, in the original basis.
fn slice_generator(eig: &Eigen, dh: &HermitianOperator, dt: f64) -> ComplexMatrix {
    let q = &eig.vectors;
    let mut k = q.adjoint() * dh.matrix() * q;
    let n = eig.values.len();
    for a in 0..n {
        for b in 0..n {
            k[(a, b)] *= phase_integral(eig.values[a] - eig.values[b], dt);
        }
    }
    q * k * q.adjoint()
}

fn check_family_dim(fam: &dyn HamiltonianFamily, dim: usize) -> Result<()> {
    if fam.dim() != dim {
        return Err(QfiError::DimMismatch {
            expected: fam.dim(),
            found: dim,
        });
    }
    Ok(())
}

fn finish_unitary(m: ComplexMatrix) -> Result<Unitary> {
    Unitary::new(m)
}

/// A contiguous run of slices: its propagator and, optionally, its
/// generator relative to the run's start.
struct Segment {
    u: ComplexMatrix,
    h: Option<ComplexMatrix>,
    level: u32,
}

impl Segment {
    /// `self` followed by `later`: `U = U_later U_self`,
    /// `h = h_self + U_self† h_later U_self`.
    fn then(self, later: Segment) -> Segment {
        let h = match (self.h, later.h) {
            (Some(a), Some(b)) => Some(a + self.u.adjoint() * b * &self.u),
            _ => None,
        };
        let level = self.level.max(later.level) + 1;
        let mut u = later.u * self.u;
        if level >= REUNITARIZE_LEVEL {
            u = polar_step(u);
        }
        Segment { u, h, level }
    }
}

/// Tree level from which partial products are re-projected onto the
/// unitary group; each slice exponential carries an `O(ε)` unitarity
/// defect and these add up linearly over the product.
const REUNITARIZE_LEVEL: u32 = 4;

/// One Newton–Schulz step towards the polar factor, `U (3I − U†U) / 2`.
fn polar_step(u: ComplexMatrix) -> ComplexMatrix {
    let n = u.nrows();
    let correction = (ComplexMatrix::identity(n, n) * Complex64::new(3.0, 0.0) - u.adjoint() * &u)
        * Complex64::new(0.5, 0.0);
    u * correction
}

/// Multiplies slices pairwise in a balanced binary tree, so rounding grows
/// with `log(steps)` rather than `steps`.
struct ProductTree {
    stack: Vec<Segment>,
}

impl ProductTree {
    fn new() -> Self {
        Self { stack: Vec::new() }
    }

    fn push(&mut self, mut seg: Segment) {
        while let Some(top) = self.stack.last() {
            if top.level != seg.level {
                break;
            }
            let earlier = self.stack.pop().expect("non-empty");
            seg = earlier.then(seg);
        }
        self.stack.push(seg);
    }

    fn finish(mut self, dim: usize) -> Segment {
        let mut acc = match self.stack.pop() {
            Some(s) => s,
            None => {
                return Segment {
                    u: ComplexMatrix::identity(dim, dim),
                    h: Some(ComplexMatrix::zeros(dim, dim)),
                    level: 0,
                }
            }
        };
        while let Some(earlier) = self.stack.pop() {
            acc = earlier.then(acc);
        }
        acc
    }
}

/// `U(t0 → t1)` as the time-ordered product of slice exponentials.
pub fn propagate(fam: &dyn HamiltonianFamily, g: f64, grid: &TimeGrid) -> Result<Unitary> {
    let dt = grid.dt();
    let mut tree = ProductTree::new();
    for t in grid.sample_times() {
        let eig = eig_hermitian(&fam.evaluate(t, g)?)?;
        tree.push(Segment {
            u: slice_exponential(&eig, dt),
            h: None,
            level: 0,
        });
    }
    finish_unitary(tree.finish(fam.dim()).u)
}

/// Partial propagators `U(t0 → t_j)` at every grid node, `j = 0..=steps`.
pub fn propagate_nodes(fam: &dyn HamiltonianFamily, g: f64, grid: &TimeGrid) -> Result<Vec<Unitary>> {
    let dt = grid.dt();
    let mut u = ComplexMatrix::identity(fam.dim(), fam.dim());
    let mut out = Vec::with_capacity(grid.steps() + 1);
    out.push(Unitary::identity(fam.dim()));
    for t in grid.sample_times() {
        let eig = eig_hermitian(&fam.evaluate(t, g)?)?;
        u = slice_exponential(&eig, dt) * u;
        out.push(finish_unitary(u.clone())?);
    }
    Ok(out)
}

/// Evolves a state slice by slice; cheaper than building the full propagator.
pub fn evolve_state(
    fam: &dyn HamiltonianFamily,
    g: f64,
    grid: &TimeGrid,
    psi0: &PureState,
) -> Result<PureState> {
    Ok(evolve_state_trajectory(fam, g, grid, psi0, false)?.pop().expect("final state"))
}

/// States at every grid node (`all_nodes`) or only the final state.
pub fn evolve_state_trajectory(
    fam: &dyn HamiltonianFamily,
    g: f64,
    grid: &TimeGrid,
    psi0: &PureState,
    all_nodes: bool,
) -> Result<Vec<PureState>> {
    check_family_dim(fam, psi0.dim())?;
    let dt = grid.dt();
    let mut psi = psi0.amplitudes().clone();
    let mut out = Vec::new();
    if all_nodes {
        out.push(psi0.clone());
    }
    for t in grid.sample_times() {
        let eig = eig_hermitian(&fam.evaluate(t, g)?)?;
        let q = &eig.vectors;
        let mut c = q.adjoint() * &psi;
        for (k, ck) in c.iter_mut().enumerate() {
            *ck *= Complex64::from_polar(1.0, -eig.values[k] * dt);
        }
        psi = q * c;
        if all_nodes {
            out.push(PureState::normalized(psi.clone())?);
        }
    }
    if !all_nodes {
        out.push(PureState::normalized(psi)?);
    }
    Ok(out)
}

/// Propagator and generator `h_g` in a single pass.
pub fn evolve_with_generator(fam: &dyn HamiltonianFamily, g: f64, grid: &TimeGrid) -> Result<Evolution> {
    let dt = grid.dt();
    let mut tree = ProductTree::new();
    for t in grid.sample_times() {
        let eig = eig_hermitian(&fam.evaluate(t, g)?)?;
        let dh = fam.evaluate_dg(t, g)?;
        tree.push(Segment {
            h: Some(slice_generator(&eig, &dh, dt)),
            u: slice_exponential(&eig, dt),
            level: 0,
        });
    }
    let total = tree.finish(fam.dim());
    let (generator, _) = HermitianOperator::symmetrized(&total.h.expect("generator tracked"))?;
    Ok(Evolution {
        unitary: finish_unitary(total.u)?,
        generator,
    })
}

/// `h_g = ∫ U†(0→t) ∂_gH(t) U(0→t) dt`.
pub fn generator_h(fam: &dyn HamiltonianFamily, g: f64, grid: &TimeGrid) -> Result<HermitianOperator> {
    Ok(evolve_with_generator(fam, g, grid)?.generator)
}

/// `∂_g U = -i ∫ U(t→T) ∂_gH(t) U(0→t) dt`, assembled as `-i U h_g`.
pub fn dg_propagator(fam: &dyn HamiltonianFamily, g: f64, grid: &TimeGrid) -> Result<ComplexMatrix> {
    let ev = evolve_with_generator(fam, g, grid)?;
    Ok((ev.unitary.matrix() * ev.generator.matrix()).map(|z| z * -I))
}

/// Centered difference `[U(g+δ) - U(g-δ)] / 2δ`.
pub fn dg_propagator_fd(
    fam: &dyn HamiltonianFamily,
    g: f64,
    grid: &TimeGrid,
    delta: f64,
) -> Result<ComplexMatrix> {
    let plus = propagate(fam, g + delta, grid)?;
    let minus = propagate(fam, g - delta, grid)?;
    Ok((plus.matrix() - minus.matrix()) / Complex64::new(2.0 * delta, 0.0))
}

/// Two-level Richardson extrapolation `(4 h(2n) - h(n)) / 3`.
///
/// The midpoint product is time-symmetric, so its error expands in even
/// powers of the slice width and the combination cancels the leading term.
pub fn generator_h_extrapolated(
    fam: &dyn HamiltonianFamily,
    g: f64,
    grid: &TimeGrid,
) -> Result<HermitianOperator> {
    if grid.rule() != SamplingRule::Midpoint {
        return Err(QfiError::InvalidArgument(
            "Richardson extrapolation requires midpoint sampling".into(),
        ));
    }
    richardson(&generator_h(fam, g, grid)?, &generator_h(fam, g, &grid.refined(2)?)?)
}

/// `(4 fine − coarse) / 3` for generators computed on a grid and on its
/// two-fold refinement. Use directly when the family itself depends on the
/// grid, e.g. a control schedule sampled at the grid's midpoints.
pub fn richardson(coarse: &HermitianOperator, fine: &HermitianOperator) -> Result<HermitianOperator> {
    if coarse.dim() != fine.dim() {
        return Err(QfiError::DimMismatch {
            expected: coarse.dim(),
            found: fine.dim(),
        });
    }
    let m = (fine.matrix() * Complex64::new(4.0, 0.0) - coarse.matrix()) / Complex64::new(3.0, 0.0);
    Ok(HermitianOperator::symmetrized(&m)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_algebra::{bloch_operator, expm_i, max_distance, pauli, Axis};
    use nalgebra::DMatrix;

    fn zero_family() -> FnFamily {
        FnFamily::new(2, |_, _| DMatrix::zeros(2, 2)).with_derivative(|_, _| DMatrix::zeros(2, 2))
    }

    fn multiplicative(h0: HermitianOperator) -> FnFamily {
        let a = h0.matrix().clone();
        let b = a.clone();
        FnFamily::new(a.nrows(), move |_, g| a.scale(g)).with_derivative(move |_, _| b.clone())
    }

    /// `H = -B (cos ωt σx + sin ωt σz)`, parameter B.
    fn rotating(omega: f64) -> FnFamily {
        FnFamily::new(2, move |t, b| {
            let (s, c) = (omega * t).sin_cos();
            bloch_operator(-b * c, 0.0, -b * s).into_matrix()
        })
        .with_derivative(move |t, _| {
            let (s, c) = (omega * t).sin_cos();
            bloch_operator(-c, 0.0, -s).into_matrix()
        })
    }

    fn rotating_closed_form(b: f64, omega: f64, t: f64) -> ComplexMatrix {
        let frame = expm_i(&pauli(Axis::Y).scale(-omega / 2.0), t).unwrap();
        let inner = expm_i(&bloch_operator(-b, omega / 2.0, 0.0), t).unwrap();
        frame.matrix() * inner.matrix()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        let g = TimeGrid::new(0.0, 2.0, 4).unwrap();
        assert_eq!(g.node(4), 2.0);
        assert!((g.sample_time(0) - 0.25).abs() < 1e-15);
        let l = g.with_rule(SamplingRule::LeftEndpoint);
        assert_eq!(l.sample_time(0), 0.0);
        assert_eq!(TimeGrid::with_density(1.5, 10.0).unwrap().steps(), 15);
    }

    #[test]
    fn zero_hamiltonian_gives_identity() {
        let grid = TimeGrid::new(0.0, 3.0, 17).unwrap();
        let u = propagate(&zero_family(), 0.0, &grid).unwrap();
        assert!(max_distance(u.matrix(), &DMatrix::identity(2, 2)) < 1e-15);
        let du = dg_propagator(&zero_family(), 0.0, &grid).unwrap();
        assert!(du.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn constant_hamiltonian_reduces_to_exponential() {
        let fam = multiplicative(pauli(Axis::Z));
        let grid = TimeGrid::new(0.0, 0.7, 33).unwrap();
        let u = propagate(&fam, 1.0, &grid).unwrap();
        let exact = expm_i(&pauli(Axis::Z), 0.7).unwrap();
        assert!(max_distance(u.matrix(), exact.matrix()) < 1e-12);
    }

    #[test]
    fn rotating_field_matches_closed_form() {
        let grid = TimeGrid::with_density(1.0, 4096.0).unwrap();
        let u = propagate(&rotating(1.0), 1.0, &grid).unwrap();
        let exact = rotating_closed_form(1.0, 1.0, 1.0);
        assert!(max_distance(u.matrix(), &exact) < 1e-6);
    }

    #[test]
    fn midpoint_converges_at_second_order() {
        let exact = rotating_closed_form(1.0, 1.0, 2.0);
        let err = |steps| {
            let grid = TimeGrid::new(0.0, 2.0, steps).unwrap();
            max_distance(propagate(&rotating(1.0), 1.0, &grid).unwrap().matrix(), &exact)
        };
        let (coarse, fine) = (err(64), err(128));
        assert!(coarse / fine >= 3.5, "ratio {}", coarse / fine);

        let left = |steps| {
            let grid = TimeGrid::new(0.0, 2.0, steps)
                .unwrap()
                .with_rule(SamplingRule::LeftEndpoint);
            max_distance(propagate(&rotating(1.0), 1.0, &grid).unwrap().matrix(), &exact)
        };
        let ratio = left(64) / left(128);
        assert!(ratio > 1.7 && ratio < 2.5, "left-endpoint ratio {ratio}");
    }

    #[test]
    fn multiplicative_parameter_derivative() {
        let fam = multiplicative(pauli(Axis::Z));
        let g = 0.8;
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let du = dg_propagator(&fam, g, &grid).unwrap();
        let expected = (pauli(Axis::Z).matrix() * expm_i(&pauli(Axis::Z), g).unwrap().matrix())
            .map(|z| z * -I);
        assert!(max_distance(&du, &expected) < 1e-8);

        let h = generator_h(&fam, g, &grid).unwrap();
        assert!(max_distance(h.matrix(), pauli(Axis::Z).matrix()) < 1e-10);
    }

    #[test]
    fn generator_multiplicative_general() {
        let h0 = bloch_operator(0.4, -0.3, 0.9);
        let fam = multiplicative(h0.clone());
        let grid = TimeGrid::new(0.0, 2.5, 7).unwrap();
        let h = generator_h(&fam, 1.3, &grid).unwrap();
        assert!(max_distance(h.matrix(), h0.scale(2.5).matrix()) < 1e-10);
    }

    #[test]
    fn generator_matches_finite_difference_of_propagator() {
        let fam = rotating(1.3);
        let grid = TimeGrid::new(0.0, 2.0, 400).unwrap();
        let analytic = dg_propagator(&fam, 0.9, &grid).unwrap();
        // Richardson-extrapolated centered differences on the same grid.
        let d1 = dg_propagator_fd(&fam, 0.9, &grid, 1e-3).unwrap();
        let d2 = dg_propagator_fd(&fam, 0.9, &grid, 5e-4).unwrap();
        let fd = (d2 * Complex64::new(4.0, 0.0) - d1) / Complex64::new(3.0, 0.0);
        assert!(max_distance(&analytic, &fd) < 1e-8);

        let ev = evolve_with_generator(&fam, 0.9, &grid).unwrap();
        let via_du = (ev.unitary.matrix().adjoint() * &analytic).map(|z| z * I);
        assert!(max_distance(&via_du, ev.generator.matrix()) < 1e-12);
    }

    #[test]
    fn finite_difference_fallback_is_flagged() {
        let fam = FnFamily::new(2, |_, g| pauli(Axis::X).matrix().scale(g * g));
        assert!(!fam.has_analytic_dg());
        let d = fam.evaluate_dg(0.0, 1.5).unwrap();
        assert!(max_distance(d.matrix(), pauli(Axis::X).scale(3.0).matrix()) < 1e-8);
    }

    #[test]
    fn state_evolution_agrees_with_propagator() {
        let fam = rotating(0.7);
        let grid = TimeGrid::new(0.0, 3.0, 300).unwrap();
        let psi0 = PureState::from_slice(&[Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]).unwrap();
        let a = evolve_state(&fam, 1.0, &grid, &psi0).unwrap();
        let b = propagate(&fam, 1.0, &grid).unwrap().apply(&psi0).unwrap();
        assert!((a.amplitudes() - b.amplitudes()).norm() < 1e-13);
        let nodes = propagate_nodes(&fam, 1.0, &grid).unwrap();
        assert_eq!(nodes.len(), 301);
        assert!(max_distance(nodes[300].matrix(), propagate(&fam, 1.0, &grid).unwrap().matrix()) < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let fam = FnFamily::new(3, |_, _| DMatrix::zeros(2, 2));
        assert!(matches!(
            fam.evaluate(0.0, 0.0),
            Err(QfiError::DimMismatch { .. })
        ));
    }
}
