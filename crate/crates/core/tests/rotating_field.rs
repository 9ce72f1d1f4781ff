//! The rotating-field qubit against oracles derived here from the
//! rotating-frame picture: with `R(t) = exp(iωtσy/2)`,
//! `R†HR − iR†Ṙ = −Bσx + (ω/2)σy`, so `U(T) = R(T) exp(−iT(−Bσx + ωσy/2))`.

use approx::assert_relative_eq;
use nalgebra::Matrix2;
use num_complex::Complex64;

use qfi_core::control::{build_tracks, control_from_tracks, total_hamiltonian, GaugeChoice};
use qfi_core::evolution::{generator_h, propagate, TimeGrid};
use qfi_core::fisher::{max_qfi, optimal_initial_state, qfi_from_generator};
use qfi_core::measurement::{estimator_stats, optimal_observable, Quadrature};
use qfi_core::qubit_example::{
    control_for_b, control_for_omega, hamiltonian, qfi_b_nocontrol, qfi_omega_nocontrol, Parameter,
    RotatingFieldParams,
};

type M2 = Matrix2<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn sx() -> M2 {
    M2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

fn sy() -> M2 {
    M2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0))
}

fn sz() -> M2 {
    M2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0))
}

/// `exp(−i (a σx + b σy + d σz))` by the Rodrigues formula.
fn exp_pauli(a: f64, b: f64, d: f64) -> M2 {
    let theta = (a * a + b * b + d * d).sqrt();
    if theta == 0.0 {
        return M2::identity();
    }
    let n = (sx() * c(a, 0.0) + sy() * c(b, 0.0) + sz() * c(d, 0.0)) / c(theta, 0.0);
    M2::identity() * c(theta.cos(), 0.0) - n * c(0.0, theta.sin())
}

fn oracle_unitary(b: f64, w: f64, t: f64) -> M2 {
    exp_pauli(0.0, -w * t / 2.0, 0.0) * exp_pauli(-b * t, w * t / 2.0, 0.0)
}

fn dist(a: &M2, m: &nalgebra::DMatrix<Complex64>) -> f64 {
    (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (a[(i, j)] - m[(i, j)]).norm())
        .fold(0.0, f64::max)
}

/// `(λmax − λmin)²` of `i U†∂U` with `∂U` from a centered difference of
/// the oracle.
fn oracle_qfi(u: impl Fn(f64) -> M2, g: f64) -> f64 {
    let step = 1e-5;
    let du = (u(g + step) - u(g - step)) / c(2.0 * step, 0.0);
    let h = u(g).adjoint() * du * c(0.0, 1.0);
    let h = (h + h.adjoint()) * c(0.5, 0.0);
    // 2×2 Hermitian: gap = 2 sqrt(((a − d)/2)² + |b|²).
    let (a, d, off) = (h[(0, 0)].re, h[(1, 1)].re, h[(0, 1)]);
    let gap = 2.0 * (((a - d) / 2.0).powi(2) + off.norm_sqr()).sqrt();
    gap * gap
}

#[test]
fn propagator_matches_rotating_frame_oracle() {
    for &(b, w, t) in &[(1.0, 0.5, 1.0), (0.7, 2.0, 3.0), (1.3, 5.0, 2.0)] {
        let p = RotatingFieldParams::matched(b, w).unwrap();
        let u = propagate(&hamiltonian(p, Parameter::B), b, &TimeGrid::with_density(t, 4096.0).unwrap()).unwrap();
        assert!(dist(&oracle_unitary(b, w, t), u.matrix()) < 1e-6, "B={b} w={w} T={t}");
    }
}

#[test]
fn uncontrolled_qfi_matches_oracle_and_closed_forms() {
    for &(w, t) in &[(0.5, 2.0), (1.0, 5.0), (2.0, 1.0)] {
        let p = RotatingFieldParams::matched(1.0, w).unwrap();
        let grid = TimeGrid::with_density(t, 4096.0).unwrap();
        let q_b = max_qfi(&generator_h(&hamiltonian(p, Parameter::B), 1.0, &grid).unwrap()).unwrap();
        let q_w = max_qfi(&generator_h(&hamiltonian(p, Parameter::Omega), w, &grid).unwrap()).unwrap();
        let o_b = oracle_qfi(|b| oracle_unitary(b, w, t), 1.0);
        let o_w = oracle_qfi(|om| oracle_unitary(1.0, om, t), w);
        assert_relative_eq!(q_b, o_b, max_relative = 1e-6);
        assert_relative_eq!(q_w, o_w, max_relative = 1e-6);
        assert_relative_eq!(qfi_b_nocontrol(&p, t), o_b, max_relative = 1e-7);
        assert_relative_eq!(qfi_omega_nocontrol(&p, t), o_w, max_relative = 1e-7);
    }
}

#[test]
fn amplitude_control_gives_linear_generator() {
    // H + Hc = R(−Bσx)R† − (ω/2)σy, so U = R(T) exp(iBTσx) and h_B = −Tσx.
    let (b, w, t) = (1.0, 1.5, 3.0);
    let p = RotatingFieldParams::matched(b, w).unwrap();
    let grid = TimeGrid::with_density(t, 4096.0).unwrap();
    let total = total_hamiltonian(hamiltonian(p, Parameter::B), control_for_b(&p, grid).unwrap()).unwrap();
    let h = generator_h(&total, b, &grid).unwrap();
    assert!(dist(&(sx() * c(-t, 0.0)), h.matrix()) < 1e-7);
    let psi0 = optimal_initial_state(&hamiltonian(p, Parameter::B), b, &grid).unwrap();
    assert_relative_eq!(qfi_from_generator(&h, &psi0).unwrap(), 4.0 * t * t, max_relative = 1e-7);
}

#[test]
fn frequency_control_gives_quadratic_generator() {
    let (w, t) = (2.0, 4.0);
    let p = RotatingFieldParams::matched(1.0, w).unwrap();
    let grid = TimeGrid::with_density(t, 4096.0).unwrap();
    let total = total_hamiltonian(hamiltonian(p, Parameter::Omega), control_for_omega(&p, grid).unwrap()).unwrap();
    let h = generator_h(&total, w, &grid).unwrap();
    assert!(dist(&(sz() * c(-t * t / 2.0, 0.0)), h.matrix()) < 1e-6);
}

#[test]
fn optimal_measurement_mean_follows_cosine() {
    // Under the amplitude control the two branches pick up ∓(B − B_c)T, so
    // ⟨O⟩ = cos(2T δB).
    let (b_c, w, t) = (1.0, 1.0, 2.0);
    let p = RotatingFieldParams::matched(b_c, w).unwrap();
    let fam = hamiltonian(p, Parameter::B);
    let grid = TimeGrid::with_density(t, 2048.0).unwrap();
    let tracks = build_tracks(&fam, b_c, &grid, GaugeChoice::CancelDiagonal).unwrap();
    let total = total_hamiltonian(&fam, control_from_tracks(&fam, &tracks).unwrap()).unwrap();
    let psi0 = optimal_initial_state(&fam, b_c, &grid).unwrap();
    for q in [Quadrature::Cosine, Quadrature::Sine] {
        let obs = optimal_observable(&tracks, None, q).unwrap();
        for db in [-0.1, 0.0, 0.05, 0.2] {
            let psi = qfi_core::evolution::evolve_state(&total, b_c + db, &grid, &psi0).unwrap();
            let stats = estimator_stats(&psi, &obs).unwrap();
            let expected = match q {
                Quadrature::Cosine => (2.0 * t * db).cos(),
                Quadrature::Sine => (2.0 * t * db).sin(),
            };
            assert!((stats.mean - expected).abs() < 1e-6, "{q:?} δB={db}: {} vs {expected}", stats.mean);
            assert!((stats.variance - (1.0 - expected * expected)).abs() < 1e-6);
        }
    }
}
