//! End-to-end checks of the library against the rotating-field closed
//! forms, the measurement and adaptive layers, and a synthetic crossing.
//!
//! Each check returns a [`CriterionReport`] with the measured deviation and
//! the tolerance it was held to.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adaptive::{
    analytic_schedule, closed_form_i, closed_form_t, loss_factor, recursion_step, rounds_needed, simulate_protocol,
    threshold_i0, AdaptiveConfig,
};
use crate::control::{
    build_tracks, control_from_tracks, crossing_pulse, detect_crossings, optimal_control, rotating_frame_hamiltonian,
    total_hamiltonian, GaugeChoice, PulseProfile, SpectralTracks,
};
use crate::error::{QfiError, Result};
use crate::evolution::{evolve_state, generator_h, propagate, richardson, FnFamily, HamiltonianFamily, TimeGrid};
use crate::fisher::{max_qfi, optimal_initial_state, qfi_from_generator, qfi_upper_bound};
use crate::measurement::{estimator_stats, estimator_variance, optimal_observable, sample_with, Quadrature};
use crate::operator_algebra::{max_distance, pauli, Axis, ComplexMatrix, HermitianOperator, PureState};
use crate::qubit_example::{
    control_for_omega, hamiltonian, qfi_b_nocontrol, qfi_omega_detuned, qfi_omega_nocontrol, Parameter,
    RotatingFieldParams,
};

const OMEGAS: [f64; 4] = [0.5, 1.0, 2.0, 5.0];
const TIMES: [f64; 6] = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0];
const DENSITY: f64 = 4096.0;

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantities, `key=value` separated by spaces.
    pub measured: String,
    pub tolerance: &'static str,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {} ({}): {} [tolerance: {}] ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.tolerance,
            self.seconds
        )
    }
}

type Check = fn() -> Result<(bool, String)>;

const CRITERIA: [(u8, &str, &str, Check); 9] = [
    (1, "uncontrolled closed forms", "rel <= 1e-6, runtime <= 60 s", uncontrolled_closed_forms),
    (2, "bound saturation under control", "rel <= 1e-6, |h_w + (BT^2/2) sz| <= 1e-8", controlled_saturation),
    (3, "T^4 scaling", "|slope - 4| <= 0.01, |slope - 2| <= 0.05", scaling_slopes),
    (4, "detuned expansion", "|exponent - 4| <= 0.3", detuned_expansion),
    (5, "ratio limit", "rel <= 1e-2", ratio_limit),
    (6, "measurement saturation", "rel <= 1e-12 (bound), rel <= 5e-2 (Monte Carlo)", measurement_saturation),
    (7, "adaptive recursion", "rel <= 1e-12, |I_emp/I_n - 1| <= 0.2, exact rounds", adaptive_recursion),
    (8, "level-crossing pulse", "pop >= 1 - 1e-6, phase <= 1e-6, frame <= 1e-8", crossing_pulse_check),
    (9, "structural invariants", "defects <= 1e-10, overlap >= 1 - 1e-6", structural_invariants),
];

pub fn criterion_ids() -> impl Iterator<Item = u8> {
    CRITERIA.iter().map(|c| c.0)
}

/// Runs one criterion; errors count as failures.
pub fn run_criterion(id: u8) -> Option<CriterionReport> {
    let &(id, name, tolerance, check) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, measured) = match check() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(CriterionReport {
        id,
        name,
        passed,
        measured,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all() -> Vec<CriterionReport> {
    criterion_ids().filter_map(run_criterion).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (a.ln() + (b.ln() - a.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

fn grid_points() -> Vec<(f64, f64)> {
    OMEGAS.iter().flat_map(|&w| TIMES.iter().map(move |&t| (w, t))).collect()
}

fn uncontrolled_closed_forms() -> Result<(bool, String)> {
    let start = Instant::now();
    let errs: Vec<(f64, f64)> = grid_points()
        .into_par_iter()
        .map(|(w, t)| {
            let p = RotatingFieldParams::matched(1.0, w)?;
            let grid = TimeGrid::with_density(t, DENSITY)?;
            let qb = max_qfi(&generator_h(&hamiltonian(p, Parameter::B), 1.0, &grid)?)?;
            let qw = max_qfi(&generator_h(&hamiltonian(p, Parameter::Omega), w, &grid)?)?;
            Ok((rel(qb, qfi_b_nocontrol(&p, t)), rel(qw, qfi_omega_nocontrol(&p, t))))
        })
        .collect::<Result<_>>()?;
    let secs = start.elapsed().as_secs_f64();
    let eb = errs.iter().map(|e| e.0).fold(0.0, f64::max);
    let ew = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    Ok((
        eb <= 1e-6 && ew <= 1e-6 && secs <= 60.0,
        format!("max_rel_B={eb:.3e} max_rel_omega={ew:.3e} runtime_s={secs:.2}"),
    ))
}

/// Generator under the control synthesized on `grid`.
fn synthesized_generator(
    fam: &dyn HamiltonianFamily,
    g: f64,
    grid: &TimeGrid,
    gauge: GaugeChoice,
) -> Result<(SpectralTracks, HermitianOperator)> {
    let (tracks, schedule) = optimal_control(fam, g, grid, gauge)?;
    let h = generator_h(&total_hamiltonian(fam, schedule)?, g, grid)?;
    Ok((tracks, h))
}

fn controlled_saturation() -> Result<(bool, String)> {
    let errs: Vec<(f64, f64, f64)> = grid_points()
        .into_par_iter()
        .map(|(w, t)| {
            let p = RotatingFieldParams::matched(1.0, w)?;
            let grid = TimeGrid::with_density(t, DENSITY)?;

            let fb = hamiltonian(p, Parameter::B);
            let (_, hb) = synthesized_generator(&fb, 1.0, &grid, GaugeChoice::CancelDiagonal)?;
            let qb = qfi_from_generator(&hb, &optimal_initial_state(&fb, 1.0, &grid)?)?;

            let fw = hamiltonian(p, Parameter::Omega);
            let (_, hw) = synthesized_generator(&fw, w, &grid, GaugeChoice::Zero)?;
            let qw = qfi_from_generator(&hw, &optimal_initial_state(&fw, w, &grid)?)?;
            // The schedule is resampled on the refined grid, not interpolated.
            let (_, hw_fine) = synthesized_generator(&fw, w, &grid.refined(2)?, GaugeChoice::Zero)?;
            let h = richardson(&hw, &hw_fine)?;
            let dh = max_distance(h.matrix(), pauli(Axis::Z).scale(-t * t / 2.0).matrix());
            Ok((rel(qb, 4.0 * t * t), rel(qw, t.powi(4)), dh))
        })
        .collect::<Result<_>>()?;
    let eb = errs.iter().map(|e| e.0).fold(0.0, f64::max);
    let ew = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let dh = errs.iter().map(|e| e.2).fold(0.0, f64::max);
    Ok((
        eb <= 1e-6 && ew <= 1e-6 && dh <= 1e-8,
        format!("max_rel_B={eb:.3e} max_rel_omega={ew:.3e} max_abs_h_omega={dh:.3e}"),
    ))
}

fn scaling_slopes() -> Result<(bool, String)> {
    let p = RotatingFieldParams::matched(1.0, 1.0)?;
    let fw = hamiltonian(p, Parameter::Omega);
    let controlled_t = geomspace(1.0, 20.0, 16);
    let controlled: Vec<f64> = controlled_t
        .par_iter()
        .map(|&t| {
            let grid = TimeGrid::with_density(t, 1024.0)?;
            let (_, h) = synthesized_generator(&fw, 1.0, &grid, GaugeChoice::Zero)?;
            qfi_from_generator(&h, &optimal_initial_state(&fw, 1.0, &grid)?)
        })
        .collect::<Result<_>>()?;
    let free_t = geomspace(10.0, 40.0, 31);
    let free: Vec<f64> = free_t
        .par_iter()
        .map(|&t| max_qfi(&generator_h(&fw, 1.0, &TimeGrid::with_density(t, 1024.0)?)?))
        .collect::<Result<_>>()?;
    let s4 = loglog_slope(&controlled_t, &controlled);
    let s2 = loglog_slope(&free_t, &free);
    Ok((
        (s4 - 4.0).abs() <= 0.01 && (s2 - 2.0).abs() <= 0.05,
        format!("controlled_slope={s4:.5} uncontrolled_slope={s2:.5}"),
    ))
}

/// Richardson-extrapolated `h_ω` under the analytic control tuned to `ω_c`.
fn detuned_generator(p: &RotatingFieldParams, grid: &TimeGrid) -> Result<HermitianOperator> {
    let at = |grid: TimeGrid| -> Result<HermitianOperator> {
        let total = total_hamiltonian(hamiltonian(*p, Parameter::Omega), control_for_omega(p, grid)?)?;
        generator_h(&total, p.omega, &grid)
    };
    richardson(&at(*grid)?, &at(grid.refined(2)?)?)
}

fn detuned_expansion() -> Result<(bool, String)> {
    let t = 10.0;
    let grid = TimeGrid::with_density(t, DENSITY)?;
    let xs = [1e-3, 2e-3, 4e-3];
    let residuals: Vec<f64> = xs
        .par_iter()
        .map(|&x| {
            let p = RotatingFieldParams::new(1.0, 1.0, 1.0 + x / t)?;
            let q = max_qfi(&detuned_generator(&p, &grid)?)?;
            Ok((q - qfi_omega_detuned(&p, t)).abs())
        })
        .collect::<Result<_>>()?;
    let dw: Vec<f64> = xs.iter().map(|x| x / t).collect();
    let exponent = loglog_slope(&dw, &residuals);
    Ok((
        (exponent - 4.0).abs() <= 0.3,
        format!(
            "T={t} residuals=[{:.3e}, {:.3e}, {:.3e}] exponent={exponent:.4}",
            residuals[0], residuals[1], residuals[2]
        ),
    ))
}

fn ratio_limit() -> Result<(bool, String)> {
    let worst: Vec<f64> = [0.5, 1.0, 2.0]
        .par_iter()
        .map(|&w| {
            let p = RotatingFieldParams::matched(1.0, w)?;
            let t = 200.0 / (4.0 + w * w).sqrt();
            let grid = TimeGrid::with_density(t, 1024.0)?;
            let fb = hamiltonian(p, Parameter::B);
            let (_, h) = synthesized_generator(&fb, 1.0, &grid, GaugeChoice::CancelDiagonal)?;
            let optimal = qfi_from_generator(&h, &optimal_initial_state(&fb, 1.0, &grid)?)?;
            let free = max_qfi(&generator_h(&fb, 1.0, &grid)?)?;
            Ok(rel(optimal / free, 1.0 + w * w / 4.0))
        })
        .collect::<Result<_>>()?;
    let m = worst.iter().copied().fold(0.0, f64::max);
    Ok((m <= 1e-2, format!("max_rel_ratio={m:.3e} (omega in 0.5, 1, 2)")))
}

fn measurement_saturation() -> Result<(bool, String)> {
    let (t, w, b_c) = (2.0, 1.0, 1.0);
    let p = RotatingFieldParams::matched(b_c, w)?;
    let fb = hamiltonian(p, Parameter::B);
    let grid = TimeGrid::with_density(t, DENSITY)?;
    let tracks = build_tracks(&fb, b_c, &grid, GaugeChoice::CancelDiagonal)?;

    let mut bound_err = 0.0_f64;
    for (fam, g, gauge) in [
        (hamiltonian(p, Parameter::B), b_c, GaugeChoice::CancelDiagonal),
        (hamiltonian(p, Parameter::Omega), w, GaugeChoice::Zero),
    ] {
        let tr = build_tracks(&fam, g, &grid, gauge)?;
        bound_err = bound_err.max(rel(1.0 / estimator_variance(&tr, 1)?, qfi_upper_bound(&fam, g, &grid)?));
    }

    // δB with gap·δB = 0.3 on the cosine branch.
    let delta = 0.3 / tracks.gap_integral();
    let schedule = control_from_tracks(&fb, &tracks)?;
    let obs = optimal_observable(&tracks, None, Quadrature::Cosine)?;
    let psi0 = optimal_initial_state(&fb, b_c, &grid)?;
    let total = total_hamiltonian(&fb, schedule)?;
    let psi = evolve_state(&total, b_c + delta, &grid, &psi0)?;
    let qfi = qfi_from_generator(&generator_h(&total, b_c + delta, &grid)?, &psi0)?;
    let mean = estimator_stats(&psi, &obs)?.mean;

    let shots = 100_000u64;
    let replicas = 20_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let estimates: Vec<f64> = (0..replicas)
        .map(|_| obs.invert(sample_with(&psi, &obs, shots, &mut rng)?.mean()))
        .collect::<Result<_>>()?;
    let m = estimates.iter().sum::<f64>() / replicas as f64;
    let var = estimates.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (replicas - 1) as f64;
    let expected = 1.0 / (shots as f64 * qfi);
    let mc_err = rel(var, expected);
    Ok((
        bound_err <= 1e-12 && mc_err <= 0.05,
        format!(
            "bound_rel={bound_err:.3e} model_mean={mean:.6} cos(0.3)={:.6} mc_var={var:.4e} 1/(shots*QFI)={expected:.4e} rel={mc_err:.3e} replicas={replicas}",
            0.3f64.cos()
        ),
    ))
}

/// `n` by stepping the recursion until `T_n ≥ T`.
fn rounds_by_iteration(i0: f64, b: f64, n: u64, target: f64) -> usize {
    let mut i = i0;
    let mut k = 0;
    loop {
        k += 1;
        let (t, next) = recursion_step(i, b, n);
        if t >= target {
            return k;
        }
        i = next;
    }
}

fn adaptive_recursion() -> Result<(bool, String)> {
    let (i0, b, n) = (4.0, 1.0, 10_000u64);
    let (ts, is) = analytic_schedule(i0, b, n, 3);
    let mut analytic_err = 0.0_f64;
    for k in 1..=3u32 {
        analytic_err = analytic_err
            .max(rel(is[k as usize], closed_form_i(i0, b, n, k)))
            .max(rel(ts[k as usize - 1], closed_form_t(i0, b, n, k)))
            .max(rel(is[k as usize], b * b * ts[k as usize - 1].powi(4) * loss_factor(n)));
    }

    let mut cfg = AdaptiveConfig::new(i0, n, b, ts[2], 7);
    cfg.rounds = Some(3);
    cfg.replicas = 400;
    let trace = simulate_protocol(&cfg)?;
    for (s, &t) in trace.rounds.iter().skip(1).zip(&ts) {
        analytic_err = analytic_err.max(rel(s.t_n, t));
    }
    for (s, &i) in trace.rounds.iter().zip(&is) {
        analytic_err = analytic_err.max(rel(s.i_analytic, i));
    }
    let last = trace.final_round();
    let emp_ratio = last.i_empirical / last.i_analytic;

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut mismatches = 0;
    for _ in 0..50 {
        let b = rng.random_range(0.5..2.0);
        let n = rng.random_range(1..=100_000u64);
        let i0 = threshold_i0(b, n) * rng.random_range(1.2..50.0);
        let target = 10f64.powf(rng.random_range(0.0..6.0));
        let cfg = AdaptiveConfig::new(i0, n, b, target, 0);
        if rounds_needed(&cfg)? != rounds_by_iteration(i0, b, n, target) {
            mismatches += 1;
        }
    }

    let mut threshold_ok = true;
    for (b, n) in [(1.0, 1u64), (1.0, 100), (2.0, 10), (0.7, 5000)] {
        let th = threshold_i0(b, n);
        let (_, above) = analytic_schedule(th * (1.0 + 1e-6), b, n, 4);
        let (_, below) = analytic_schedule(th * (1.0 - 1e-6), b, n, 4);
        threshold_ok &= above.windows(2).all(|w| w[1] > w[0]);
        threshold_ok &= below.windows(2).all(|w| w[1] < w[0]);
    }

    Ok((
        analytic_err <= 1e-12 && (emp_ratio - 1.0).abs() <= 0.2 && mismatches == 0 && threshold_ok,
        format!(
            "analytic_rel={analytic_err:.3e} I_emp/I_3={emp_ratio:.4} replicas={} rounds_mismatches={mismatches}/50 threshold_ok={threshold_ok}",
            cfg.replicas
        ),
    ))
}

/// `H = g diag(1 − t, t)`, whose two tracks cross at `t = 1/2`.
pub fn crossing_family() -> FnFamily {
    let d = |t: f64| HermitianOperator::from_real_diagonal(&[1.0 - t, t]).unwrap().into_matrix();
    FnFamily::new(2, move |t, g| d(t).scale(g)).with_derivative(move |t, _| d(t))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CrossingOutcome {
    pub tau: f64,
    /// Population on the new extreme track at the final time.
    pub population: f64,
    /// `e^{iθ_m(T)} ⟨ψ_m(T)|Ψ(T)⟩` on that track.
    pub phase: Complex64,
    /// `(−1)^{l+1} i`.
    pub expected: Complex64,
    /// Worst deviation of the rotating-frame Hamiltonian from `h(t) σ_nm`
    /// over the slice midpoints.
    pub frame_error: f64,
}

/// Carries the top track of [`crossing_family`] across its crossing with
/// a raised-cosine pulse of area `(l + ½)π`.
pub fn crossing_outcome(l: i64) -> Result<CrossingOutcome> {
    let fam = crossing_family();
    let grid = TimeGrid::new(0.0, 1.0, 1000)?;
    let tracks = build_tracks(&fam, 1.0, &grid, GaugeChoice::Zero)?;
    let crossing = detect_crossings(&tracks)
        .into_iter()
        .find(|c| c.actionable)
        .ok_or_else(|| QfiError::Numerical("no actionable crossing found".into()))?;
    let mut schedule = control_from_tracks(&fam, &tracks)?;
    let pulse = crossing_pulse(&tracks, crossing.tau, crossing.n, crossing.m, 0.02, l, PulseProfile::RaisedCosine)?;
    let phase = pulse.acquired_phase();
    schedule.add_pulse(pulse.clone())?;
    let total = total_hamiltonian(&fam, schedule)?;

    let (_, top0) = tracks.extreme_tracks(0)?;
    let last = tracks.last_point();
    let (_, top1) = tracks.extreme_tracks(last)?;
    let psi0 = PureState::new(tracks.vector(top0, 0).clone())?;
    let psi = evolve_state(&total, 1.0, &grid, &psi0)?;
    let amp = tracks.vector(top1, last).dotc(psi.amplitudes()) * Complex64::from_polar(1.0, tracks.theta(top1)[last]);

    let mut frame_err = 0.0_f64;
    for j in 0..grid.steps() {
        let p = SpectralTracks::node_point(j) + 1;
        let t = tracks.times()[p];
        let h = rotating_frame_hamiltonian(&total, &tracks, 1.0, p)?;
        let mut expected: ComplexMatrix = DMatrix::zeros(2, 2);
        let e = Complex64::new(pulse.envelope(t), 0.0);
        expected[(pulse.n, pulse.m)] = e;
        expected[(pulse.m, pulse.n)] = e;
        frame_err = frame_err.max(max_distance(h.matrix(), &expected));
    }
    Ok(CrossingOutcome {
        tau: crossing.tau,
        population: amp.norm_sqr(),
        phase: amp,
        expected: phase,
        frame_error: frame_err,
    })
}

fn crossing_pulse_check() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for l in 0..=2 {
        let o = crossing_outcome(l)?;
        let (pop, dphase, frame) = (o.population, (o.phase - o.expected).norm(), o.frame_error);
        ok &= pop >= 1.0 - 1e-6 && dphase <= 1e-6 && frame <= 1e-8;
        parts.push(format!("l={l}: pop={pop:.12} dphase={dphase:.2e} frame={frame:.2e}"));
    }
    Ok((ok, parts.join("; ")))
}

/// Spin-1 field rotating in the x–z plane; `∂_gH` has the fixed spectrum
/// `{−1, 0, 1}`.
pub fn spin_one_family() -> FnFamily {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64| Complex64::new(re, 0.0);
    let jx = DMatrix::from_row_slice(3, 3, &[c(0.0), c(s), c(0.0), c(s), c(0.0), c(s), c(0.0), c(s), c(0.0)]);
    let jz = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(0.0), c(-1.0)]));
    let (jx2, jz2) = (jx.clone(), jz.clone());
    let dh = move |t: f64| &jx2 * c(t.cos()) + &jz2 * c(t.sin());
    let dh2 = dh.clone();
    FnFamily::new(3, move |t, g| dh(t) * c(g)).with_derivative(move |t, _| dh2(t))
}

/// Largest `‖ψ_k(p+1) − ψ_k(p)‖ / Δt` over all tracks.
fn vector_lipschitz(tracks: &SpectralTracks) -> f64 {
    let times = tracks.times();
    let mut worst = 0.0_f64;
    for k in 0..tracks.n_tracks() {
        for p in 1..tracks.n_points() {
            let d = (tracks.vector(k, p) - tracks.vector(k, p - 1)).norm();
            worst = worst.max(d / (times[p] - times[p - 1]));
        }
    }
    worst
}

struct Invariants {
    unitarity: f64,
    hermiticity: f64,
    smoothness: f64,
    dominance: f64,
    transport: f64,
}

fn invariants_for(fam: &dyn HamiltonianFamily, g: f64, t: f64, gauge: GaugeChoice) -> Result<Invariants> {
    let grid = TimeGrid::with_density(t, 1024.0)?;
    let (tracks, schedule) = optimal_control(fam, g, &grid, gauge.clone())?;
    let hermiticity = schedule.hermiticity_defect();
    let total = total_hamiltonian(fam, schedule)?;
    let u = propagate(&total, g, &grid)?;
    let u_free = propagate(fam, g, &grid)?;
    let unitarity = u.defect().max(u_free.defect());

    let coarse = build_tracks(fam, g, &TimeGrid::with_density(t, 512.0)?, gauge)?;
    let smoothness = (vector_lipschitz(&tracks) - vector_lipschitz(&coarse)).abs() / (1.0 + vector_lipschitz(&coarse));

    let bound = qfi_upper_bound(fam, g, &grid)?;
    let h_free = generator_h(fam, g, &grid)?;
    let h = generator_h(&total, g, &grid)?;
    let q = max_qfi(&h)?.max(max_qfi(&h_free)?);
    let dominance = (q - bound * (1.0 + 1e-8)).max(0.0);

    let last = tracks.last_point();
    let mut transport = 0.0_f64;
    for k in 0..tracks.n_tracks() {
        let psi = u.apply(&PureState::new(tracks.vector(k, 0).clone())?)?;
        let overlap = tracks.vector(k, last).dotc(psi.amplitudes()).norm_sqr();
        transport = transport.max(1.0 - overlap);
    }
    Ok(Invariants {
        unitarity,
        hermiticity,
        smoothness,
        dominance,
        transport,
    })
}

fn structural_invariants() -> Result<(bool, String)> {
    let mut cases: Vec<(RotatingFieldParams, Parameter, f64)> = Vec::new();
    for &w in &OMEGAS {
        for &t in &[0.5, 2.0, 10.0] {
            for param in [Parameter::B, Parameter::Omega] {
                cases.push((RotatingFieldParams::matched(1.0, w)?, param, t));
            }
        }
    }
    let mut results: Vec<Invariants> = cases
        .par_iter()
        .map(|&(p, param, t)| {
            let fam = hamiltonian(p, param);
            let gauge = match param {
                Parameter::B => GaugeChoice::CancelDiagonal,
                Parameter::Omega => GaugeChoice::Zero,
            };
            invariants_for(&fam, fam.true_value(), t, gauge)
        })
        .collect::<Result<_>>()?;
    let spin = spin_one_family();
    for t in [1.0, 2.0 * PI] {
        results.push(invariants_for(&spin, 0.7, t, GaugeChoice::CancelDiagonal)?);
    }
    let worst = |f: fn(&Invariants) -> f64| results.iter().map(f).fold(0.0, f64::max);
    let (u, h, s, d, tr) = (
        worst(|r| r.unitarity),
        worst(|r| r.hermiticity),
        worst(|r| r.smoothness),
        worst(|r| r.dominance),
        worst(|r| r.transport),
    );
    Ok((
        u <= 1e-10 && h <= 1e-10 && s <= 1e-2 && d == 0.0 && tr <= 1e-6,
        format!(
            "cases={} unitarity={u:.2e} hermiticity={h:.2e} gauge_lipschitz_drift={s:.2e} bound_excess={d:.2e} transport_loss={tr:.2e}",
            results.len()
        ),
    ))
}
