//! Qubit in a rotating magnetic field,
//! `H(t) = −B (cos ωt σx + sin ωt σz)`, with closed forms for its
//! propagator, generators and QFI with and without control.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::ControlSchedule;
use crate::error::{QfiError, Result};
use crate::evolution::{HamiltonianFamily, TimeGrid};
use crate::operator_algebra::{bloch_operator, expm_i, pauli, Axis, ComplexMatrix, HermitianOperator, Unitary, I};

/// Which of `B` or `ω` plays the role of the estimated parameter `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    B,
    Omega,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotatingFieldParams {
    pub b: f64,
    pub omega: f64,
    /// Frequency the control is tuned to; `δω = ω_c − ω`.
    pub omega_c: f64,
}

impl RotatingFieldParams {
    pub fn new(b: f64, omega: f64, omega_c: f64) -> Result<Self> {
        if !(b.is_finite() && omega.is_finite() && omega_c.is_finite()) {
            return Err(QfiError::InvalidArgument("field parameters must be finite".into()));
        }
        if b <= 0.0 {
            return Err(QfiError::InvalidArgument(format!("B = {b} must be positive")));
        }
        Ok(Self { b, omega, omega_c })
    }

    /// Control matched to the true frequency.
    pub fn matched(b: f64, omega: f64) -> Result<Self> {
        Self::new(b, omega, omega)
    }

    pub fn delta_omega(&self) -> f64 {
        self.omega_c - self.omega
    }
}

fn field(b: f64, omega: f64, t: f64) -> HermitianOperator {
    let (s, c) = (omega * t).sin_cos();
    bloch_operator(-b * c, 0.0, -b * s)
}

/// The rotating-field family with `g` standing for `B` or `ω`.
#[derive(Clone, Copy, Debug)]
pub struct RotatingField {
    pub params: RotatingFieldParams,
    pub parameter: Parameter,
}

pub fn hamiltonian(params: RotatingFieldParams, parameter: Parameter) -> RotatingField {
    RotatingField { params, parameter }
}

impl RotatingField {
    /// True value of the estimated parameter.
    pub fn true_value(&self) -> f64 {
        match self.parameter {
            Parameter::B => self.params.b,
            Parameter::Omega => self.params.omega,
        }
    }

    fn resolve(&self, g: f64) -> (f64, f64) {
        match self.parameter {
            Parameter::B => (g, self.params.omega),
            Parameter::Omega => (self.params.b, g),
        }
    }
}

impl HamiltonianFamily for RotatingField {
    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, t: f64, g: f64) -> Result<HermitianOperator> {
        let (b, omega) = self.resolve(g);
        Ok(field(b, omega, t))
    }

    fn evaluate_dg(&self, t: f64, g: f64) -> Result<HermitianOperator> {
        let (b, omega) = self.resolve(g);
        let (s, c) = (omega * t).sin_cos();
        Ok(match self.parameter {
            Parameter::B => bloch_operator(-c, 0.0, -s),
            Parameter::Omega => bloch_operator(t * b * s, 0.0, -t * b * c),
        })
    }

    fn evaluate_dg_dt(&self, t: f64, g: f64) -> Option<Result<HermitianOperator>> {
        let (b, omega) = self.resolve(g);
        let (s, c) = (omega * t).sin_cos();
        Some(Ok(match self.parameter {
            Parameter::B => bloch_operator(omega * s, 0.0, -omega * c),
            Parameter::Omega => bloch_operator(b * (s + omega * t * c), 0.0, b * (omega * t * s - c)),
        }))
    }
}

/// `U(0→t) = exp(i(ω/2)σy t) · exp(i(Bσx − (ω/2)σy) t)`.
pub fn closed_form_unitary_nocontrol(p: &RotatingFieldParams, t: f64) -> Result<Unitary> {
    let frame = expm_i(&pauli(Axis::Y).scale(-p.omega / 2.0), t)?;
    let inner = expm_i(&bloch_operator(-p.b, p.omega / 2.0, 0.0), t)?;
    Ok(inner.then(&frame))
}

pub fn qfi_b_optimal(t: f64) -> f64 {
    4.0 * t * t
}

pub fn qfi_b_nocontrol(p: &RotatingFieldParams, t: f64) -> f64 {
    let (b, w) = (p.b, p.omega);
    let r2 = 4.0 * b * b + w * w;
    let r = r2.sqrt();
    16.0 * b * b * t * t / r2 + 8.0 * w * w * (1.0 - (t * r).cos()) / (r2 * r2)
}

pub fn qfi_omega_optimal(p: &RotatingFieldParams, t: f64) -> f64 {
    p.b * p.b * t.powi(4)
}

pub fn qfi_omega_nocontrol(p: &RotatingFieldParams, t: f64) -> f64 {
    let b2 = p.b * p.b;
    let r2 = 4.0 * b2 + p.omega * p.omega;
    let r = r2.sqrt();
    4.0 * b2 * t * t / r2 - 8.0 * b2 * t * (t * r).sin() / (r2 * r) + 8.0 * b2 * (1.0 - (t * r).cos()) / (r2 * r2)
}

/// `B²T⁴ (1 − T²δω²/18)`, valid for `|δω| T ≪ 1`.
pub fn qfi_omega_detuned(p: &RotatingFieldParams, t: f64) -> f64 {
    let d = p.delta_omega();
    qfi_omega_optimal(p, t) * (1.0 - t * t * d * d / 18.0)
}

/// Generator `h_B` of the uncontrolled evolution.
pub fn h_b_closed_form(p: &RotatingFieldParams, t: f64) -> HermitianOperator {
    let (b, w) = (p.b, p.omega);
    let r2 = 4.0 * b * b + w * w;
    let r = r2.sqrt();
    let (s, c) = (t * r).sin_cos();
    let x = -(4.0 * b * b * t / r2 + w * w * s / (r2 * r));
    let y = 2.0 * b * w * (t / r2 - s / (r2 * r));
    let z = -w * (1.0 - c) / r2;
    bloch_operator(x, y, z)
}

/// Generator `h_ω` of the uncontrolled evolution.
pub fn h_omega_closed_form(p: &RotatingFieldParams, t: f64) -> HermitianOperator {
    let (b, w) = (p.b, p.omega);
    let r2 = 4.0 * b * b + w * w;
    let r = r2.sqrt();
    let (s, c) = (t * r).sin_cos();
    let a = b * (s / (r2 * r) - t * c / r2);
    let z = b * (-t * s / r + (1.0 - c) / r2);
    bloch_operator(a * w, a * 2.0 * b, z)
}

/// Second-order expansion of `h_ω` in `δω` under the detuned control.
pub fn h_omega_detuned_expansion(p: &RotatingFieldParams, t: f64) -> HermitianOperator {
    let (b, d) = (p.b, p.delta_omega());
    let x = -b * t.powi(3) / 3.0 * d;
    let y = 4.0 * b * b * t.powi(5) / 15.0 * d * d / 2.0;
    let z = -b * t * t / 2.0 + b * t.powi(4) / 4.0 * d * d / 2.0;
    bloch_operator(x, y, z)
}

/// Eigenvalues `∓(BT²/2 − BT⁴δω²/72)` of the detuned generator, ascending.
pub fn detuned_eigenvalues(p: &RotatingFieldParams, t: f64) -> (f64, f64) {
    let d = p.delta_omega();
    let half = p.b * t * t / 2.0 - p.b * t.powi(4) * d * d / 72.0;
    (-half, half)
}

/// `∂_ωU(0→T)` under matched control:
/// `(i/2) B T² (−sin(ωT/2) σx + cos(ωT/2) σz)`.
pub fn dw_unitary_matched(p: &RotatingFieldParams, t: f64) -> ComplexMatrix {
    let (s, c) = (p.omega * t / 2.0).sin_cos();
    bloch_operator(-s, 0.0, c)
        .into_matrix()
        .map(|z| z * I * Complex64::new(p.b * t * t / 2.0, 0.0))
}

/// `H_c = −(ω/2) σy` on `grid`, tuned to the true `B`.
pub fn control_for_b(p: &RotatingFieldParams, grid: TimeGrid) -> Result<ControlSchedule> {
    let op = pauli(Axis::Y).scale(-p.omega / 2.0);
    ControlSchedule::from_fn(grid, p.b, |_| Ok(op.clone()))
}

/// `H_c = B (cos ω_c t σx + sin ω_c t σz) − (ω_c/2) σy` on `grid`.
pub fn control_for_omega(p: &RotatingFieldParams, grid: TimeGrid) -> Result<ControlSchedule> {
    ControlSchedule::from_fn(grid, p.omega_c, |t| Ok(control_omega_at(p, t)))
}

fn control_omega_at(p: &RotatingFieldParams, t: f64) -> HermitianOperator {
    let wc = p.omega_c;
    let (s, c) = (wc * t).sin_cos();
    bloch_operator(p.b * c, -wc / 2.0, p.b * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::total_hamiltonian;
    use crate::evolution::{dg_propagator, generator_h, propagate};
    use crate::operator_algebra::{eig_hermitian, max_distance};

    #[test]
    fn hamiltonian_snapshots() {
        let p = RotatingFieldParams::new(1.3, 0.8, 0.8).unwrap();
        let fam = hamiltonian(p, Parameter::B);
        let h0 = fam.evaluate(0.0, 1.3).unwrap();
        assert!(max_distance(h0.matrix(), pauli(Axis::X).scale(-1.3).matrix()) < 1e-15);
        let hq = fam.evaluate(std::f64::consts::FRAC_PI_2 / 0.8, 1.3).unwrap();
        assert!(max_distance(hq.matrix(), pauli(Axis::Z).scale(-1.3).matrix()) < 1e-14);
        let dw = hamiltonian(p, Parameter::Omega);
        for &t in &[0.2, 1.0, 3.7] {
            let e = eig_hermitian(&dw.evaluate_dg(t, 0.8).unwrap()).unwrap();
            assert!((e.values[1] - t * 1.3).abs() < 1e-13 && (e.values[0] + t * 1.3).abs() < 1e-13);
            let e = eig_hermitian(&fam.evaluate(t, 1.3).unwrap()).unwrap();
            assert!((e.values[1] - 1.3).abs() < 1e-14);
        }
        assert!(RotatingFieldParams::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_unitary_limits() {
        let p = RotatingFieldParams::new(0.7, 0.0, 0.0).unwrap();
        let u = closed_form_unitary_nocontrol(&p, 1.9).unwrap();
        let expected = expm_i(&pauli(Axis::X).scale(-0.7), 1.9).unwrap();
        assert!(max_distance(u.matrix(), expected.matrix()) < 1e-14);
        let u0 = closed_form_unitary_nocontrol(&p, 0.0).unwrap();
        assert!(max_distance(u0.matrix(), Unitary::identity(2).matrix()) < 1e-15);
    }

    #[test]
    fn qfi_closed_form_limits() {
        let p = RotatingFieldParams::new(1.0, 0.0, 0.0).unwrap();
        assert!((qfi_b_nocontrol(&p, 2.5) - qfi_b_optimal(2.5)).abs() < 1e-12);
        assert_eq!(qfi_b_optimal(1.0), 4.0);
        let p = RotatingFieldParams::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(qfi_omega_optimal(&p, 2.0), 16.0);
        assert_eq!(qfi_omega_nocontrol(&p, 0.0), 0.0);
        let q = RotatingFieldParams::new(1.0, 1.0, 1.5).unwrap();
        let expected = 16.0 * (1.0 - 4.0 * 0.25 / 18.0);
        assert!((qfi_omega_detuned(&q, 2.0) - expected).abs() < 1e-12);
        let d = RotatingFieldParams::new(1.0, 1.0, 1.0 + 1.0 / 2.0).unwrap();
        assert!((qfi_omega_detuned(&d, 2.0) - 16.0 * 17.0 / 18.0).abs() < 1e-12);
    }

    #[test]
    fn generators_match_pipeline() {
        let p = RotatingFieldParams::new(1.0, 2.0, 2.0).unwrap();
        let grid = TimeGrid::with_density(3.0, 2048.0).unwrap();
        let hb = generator_h(&hamiltonian(p, Parameter::B), p.b, &grid).unwrap();
        assert!(max_distance(hb.matrix(), h_b_closed_form(&p, 3.0).matrix()) < 1e-6);
        let hw = generator_h(&hamiltonian(p, Parameter::Omega), p.omega, &grid).unwrap();
        assert!(max_distance(hw.matrix(), h_omega_closed_form(&p, 3.0).matrix()) < 1e-6);
        let e = eig_hermitian(&hb).unwrap();
        let gap = e.values[1] - e.values[0];
        assert!((gap * gap / qfi_b_nocontrol(&p, 3.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matched_control_cases() {
        let p = RotatingFieldParams::matched(1.2, 0.9).unwrap();
        let grid = TimeGrid::with_density(2.0, 1024.0).unwrap();
        let total = total_hamiltonian(hamiltonian(p, Parameter::Omega), control_for_omega(&p, grid).unwrap()).unwrap();
        let u = propagate(&total, p.omega, &grid).unwrap();
        let expected = expm_i(&pauli(Axis::Y).scale(-p.omega / 2.0), 2.0).unwrap();
        assert!(max_distance(u.matrix(), expected.matrix()) < 1e-12);
        let du = dg_propagator(&total, p.omega, &grid).unwrap();
        assert!(max_distance(&du, &dw_unitary_matched(&p, 2.0)) < 1e-6);
        let h = generator_h(&total, p.omega, &grid).unwrap();
        assert!(max_distance(h.matrix(), pauli(Axis::Z).scale(-p.b * 2.0 * 2.0 / 2.0).matrix()) < 1e-6);
    }

    #[test]
    fn control_special_cases() {
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let p = RotatingFieldParams::new(1.0, 0.0, 0.0).unwrap();
        assert!(control_for_b(&p, grid).unwrap().base().iter().all(|op| op.max_abs() == 0.0));
        let p = RotatingFieldParams::new(1.0, 1.0, 1.0).unwrap();
        let expected = pauli(Axis::Y).scale(-0.5);
        assert!(control_for_b(&p, grid).unwrap().base().iter().all(|op| op == &expected));
        let tiny = RotatingFieldParams::new(1e-300, 1.0, 0.6).unwrap();
        let sched = control_for_omega(&tiny, grid).unwrap();
        assert!(max_distance(sched.base_at(0.3).matrix(), pauli(Axis::Y).scale(-0.3).matrix()) < 1e-15);
    }

    #[test]
    fn detuned_eigenvalues_match_expansion() {
        let p = RotatingFieldParams::new(1.0, 1.0, 1.0 + 1e-3).unwrap();
        let e = eig_hermitian(&h_omega_detuned_expansion(&p, 2.0)).unwrap();
        let (lo, hi) = detuned_eigenvalues(&p, 2.0);
        // The expansion's eigenvalues agree to second order in δω.
        assert!((e.values[1] - hi).abs() < 1e-9 && (e.values[0] - lo).abs() < 1e-9);
    }
}
