//! Quantum Fisher information of pure states and the eigenvalue-gap bound.

use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};
use crate::evolution::{evolve_state, HamiltonianFamily, TimeGrid};
use crate::operator_algebra::{
    canonical_phase, eig_hermitian, ComplexVector, Eigen, HermitianOperator, PureState,
};

/// Negative variances down to this value are rounding and clamp to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QfiMethod {
    GeneratorVariance,
    FidelityFd,
    ClosedForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfiReport {
    pub value: f64,
    pub upper_bound: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub method: QfiMethod,
}

impl QfiReport {
    /// `value ≤ upper_bound (1 + 1e-8)`.
    pub fn is_consistent(&self) -> bool {
        self.value <= self.upper_bound * (1.0 + 1e-8) + 1e-12
    }
}

fn clamp_nonnegative(x: f64, scale: f64) -> Result<f64> {
    if x >= 0.0 {
        Ok(x)
    } else if x >= -NEGATIVE_CLAMP * (1.0 + scale) {
        Ok(0.0)
    } else {
        Err(QfiError::Numerical(format!("negative Fisher information {x:e}")))
    }
}

/// `4 (⟨∂ψ|∂ψ⟩ − |⟨ψ|∂ψ⟩|²)`.
pub fn qfi_from_state(psi: &PureState, dpsi: &ComplexVector) -> Result<f64> {
    if dpsi.len() != psi.dim() {
        return Err(QfiError::DimMismatch {
            expected: psi.dim(),
            found: dpsi.len(),
        });
    }
    let norm = dpsi.norm_squared();
    let overlap = psi.amplitudes().dotc(dpsi).norm_sqr();
    clamp_nonnegative(4.0 * (norm - overlap), 4.0 * norm)
}

/// `4 Var_ψ0(h)`.
pub fn qfi_from_generator(h: &HermitianOperator, psi0: &PureState) -> Result<f64> {
    if h.dim() != psi0.dim() {
        return Err(QfiError::DimMismatch {
            expected: h.dim(),
            found: psi0.dim(),
        });
    }
    let v = psi0.amplitudes();
    let hv = h.matrix() * v;
    let second = hv.norm_squared();
    let first = v.dotc(&hv).re;
    clamp_nonnegative(4.0 * (second - first * first), 4.0 * second)
}

/// Largest QFI reachable over initial states: `(λ_max − λ_min)²` of `h`.
pub fn max_qfi(h: &HermitianOperator) -> Result<f64> {
    let e = eig_hermitian(h)?;
    let gap = e.values[e.values.len() - 1] - e.values[0];
    Ok(gap * gap)
}

/// `∫ (μ_max(t) − μ_min(t)) dt` of `∂_gH` by quadrature on the grid's
/// sample times.
pub fn gap_integral(fam: &dyn HamiltonianFamily, g: f64, grid: &TimeGrid) -> Result<f64> {
    let dt = grid.dt();
    let mut total = 0.0;
    for t in grid.sample_times() {
        let e = eig_hermitian(&fam.evaluate_dg(t, g)?)?;
        total += (e.values[e.values.len() - 1] - e.values[0]) * dt;
    }
    Ok(total)
}

/// `[∫ (μ_max − μ_min) dt]²`.
pub fn qfi_upper_bound(fam: &dyn HamiltonianFamily, g: f64, grid: &TimeGrid) -> Result<f64> {
    let gap = gap_integral(fam, g, grid)?;
    Ok(gap * gap)
}

/// Fidelity-based QFI, `8 (1 − |⟨ψ(g−δ/2)|ψ(g+δ/2)⟩|) / δ²`.
///
/// The symmetric placement removes the first-order bias of the one-sided
/// form.
pub fn qfi_fidelity_fd(
    fam: &dyn HamiltonianFamily,
    g: f64,
    grid: &TimeGrid,
    psi0: &PureState,
    delta: f64,
) -> Result<f64> {
    if delta <= 0.0 || !delta.is_finite() {
        return Err(QfiError::InvalidArgument(format!("step {delta} must be positive")));
    }
    let a = evolve_state(fam, g - 0.5 * delta, grid, psi0)?;
    let b = evolve_state(fam, g + 0.5 * delta, grid, psi0)?;
    let fidelity = a.inner(&b).norm().min(1.0);
    Ok(8.0 * (1.0 - fidelity) / (delta * delta))
}

/// Fraction of a slice at which the initial-state eigenproblem is solved
/// when `∂_gH(t0)` is fully degenerate (e.g. vanishes at `t0`).
pub const LIMIT_OFFSET: f64 = 1e-3;

/// Eigensystem of `∂_gH` at `t`, nudged to `t + LIMIT_OFFSET·Δt` when the
/// spectrum at `t` collapses to a single value.
pub(crate) fn dg_eigen_with_limit(
    fam: &dyn HamiltonianFamily,
    g: f64,
    t: f64,
    dt: f64,
) -> Result<Eigen> {
    let e = eig_hermitian(&fam.evaluate_dg(t, g)?)?;
    if e.clusters().len() == 1 && e.values.len() > 1 {
        return eig_hermitian(&fam.evaluate_dg(t + LIMIT_OFFSET * dt, g)?);
    }
    Ok(e)
}

/// `(|ψ_max(t0)⟩ + |ψ_min(t0)⟩)/√2` for the eigenvectors of `∂_gH(t0)`,
/// each in canonical phase.
pub fn optimal_initial_state(
    fam: &dyn HamiltonianFamily,
    g: f64,
    grid: &TimeGrid,
) -> Result<PureState> {
    let e = dg_eigen_with_limit(fam, g, grid.t0(), grid.dt())?;
    let clusters = e.clusters();
    let (lo, hi) = (&clusters[0], &clusters[clusters.len() - 1]);
    if lo.len() > 1 || hi.len() > 1 || clusters.len() < 2 {
        return Err(QfiError::DegenerateExtremes { t: grid.t0() });
    }
    let vmin = canonical_phase(&e.vector(lo.start));
    let vmax = canonical_phase(&e.vector(hi.start));
    PureState::normalized(vmax + vmin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{generator_h, FnFamily};
    use crate::operator_algebra::{bloch_operator, pauli, Axis, ONE};
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex64;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_derivative_gives_zero() {
        let psi = PureState::basis(2, 0);
        assert_eq!(qfi_from_state(&psi, &DVector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn phase_estimation_state() {
        let (g, t) = (0.4, 1.7);
        let ph = Complex64::from_polar(1.0, -g * t);
        let psi = PureState::from_slice(&[ONE, ph]).unwrap();
        let dpsi = DVector::from_vec(vec![c(0.0, 0.0), ph * c(0.0, -t) * FRAC_1_SQRT_2]);
        assert!((qfi_from_state(&psi, &dpsi).unwrap() - t * t).abs() < 1e-12);
    }

    #[test]
    fn generator_variance_cases() {
        let h = bloch_operator(0.3, -0.7, 0.2);
        let e = eig_hermitian(&h).unwrap();
        let eigvec = PureState::new(e.vector(0)).unwrap();
        assert!(qfi_from_generator(&h, &eigvec).unwrap() < 1e-12);

        let sup = PureState::normalized(e.vector(0) + e.vector(1)).unwrap();
        let gap = e.values[1] - e.values[0];
        assert!((qfi_from_generator(&h, &sup).unwrap() - gap * gap).abs() < 1e-12);
        assert!((max_qfi(&h).unwrap() - gap * gap).abs() < 1e-12);

        let (b, t) = (1.3, 2.0);
        let hw = pauli(Axis::Z).scale(-b * t * t / 2.0);
        let plus = PureState::from_slice(&[ONE, ONE]).unwrap();
        let expected = b * b * t.powi(4);
        assert!((qfi_from_generator(&hw, &plus).unwrap() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn clamp_rejects_large_negative() {
        assert_eq!(clamp_nonnegative(-1e-12, 0.0).unwrap(), 0.0);
        assert!(clamp_nonnegative(-1e-3, 0.0).is_err());
    }

    fn rotating_b(omega: f64) -> FnFamily {
        FnFamily::new(2, move |t, b| {
            let (s, co) = (omega * t).sin_cos();
            bloch_operator(-b * co, 0.0, -b * s).into_matrix()
        })
        .with_derivative(move |t, _| {
            let (s, co) = (omega * t).sin_cos();
            bloch_operator(-co, 0.0, -s).into_matrix()
        })
    }

    #[test]
    fn gap_bounds() {
        let grid = TimeGrid::new(0.0, 1.5, 100).unwrap();
        let bound = qfi_upper_bound(&rotating_b(1.0), 1.0, &grid).unwrap();
        assert!((bound - 4.0 * 1.5 * 1.5).abs() < 1e-12);

        let zero = FnFamily::new(2, |_, _| DMatrix::zeros(2, 2)).with_derivative(|_, _| DMatrix::zeros(2, 2));
        assert_eq!(qfi_upper_bound(&zero, 0.0, &grid).unwrap(), 0.0);
    }

    #[test]
    fn initial_state_for_sigma_x_derivative() {
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let psi = optimal_initial_state(&rotating_b(1.0), 1.0, &grid).unwrap();
        assert!((psi.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initial_state_three_levels() {
        let fam = FnFamily::new(3, |_, g| {
            HermitianOperator::from_real_diagonal(&[2.0 * g, g, 0.0]).unwrap().into_matrix()
        })
        .with_derivative(|_, _| HermitianOperator::from_real_diagonal(&[2.0, 1.0, 0.0]).unwrap().into_matrix());
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let psi = optimal_initial_state(&fam, 1.0, &grid).unwrap();
        let a = psi.amplitudes();
        assert!((a[0] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-14);
        assert!(a[1].norm() < 1e-14);
        assert!((a[2] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn degenerate_extremes_rejected() {
        let fam = FnFamily::new(3, |_, _| DMatrix::zeros(3, 3))
            .with_derivative(|_, _| HermitianOperator::from_real_diagonal(&[1.0, 1.0, 0.0]).unwrap().into_matrix());
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        assert!(matches!(
            optimal_initial_state(&fam, 0.0, &grid),
            Err(QfiError::DegenerateExtremes { .. })
        ));
    }

    #[test]
    fn fidelity_matches_generator_variance() {
        let fam = rotating_b(0.8);
        let grid = TimeGrid::new(0.0, 2.0, 2000).unwrap();
        let psi0 = PureState::from_slice(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let h = generator_h(&fam, 1.0, &grid).unwrap();
        let var = qfi_from_generator(&h, &psi0).unwrap();
        let fd = qfi_fidelity_fd(&fam, 1.0, &grid, &psi0, 1e-4).unwrap();
        assert!(((var - fd) / var).abs() < 1e-4, "{var} vs {fd}");
    }
}
