//! Spectral tracks of `∂_gH`, the optimal control Hamiltonian, level
//! crossings and the pulses that carry the state across them.
//!
//! With eigenpairs `μ_k(t), |ψ_k(t)⟩` of `∂_gH(t, g_c)` and gauge functions
//! `f_k(t)`, the control
//!
//! ```text
//! H_c = Σ_k f_k |ψ_k⟩⟨ψ_k| − H(t, g_c) + i Σ_k |∂_tψ_k⟩⟨ψ_k|
//! ```
//!
//! maps `|ψ_k(0)⟩ ↦ e^{-iθ_k(t)} |ψ_k(t)⟩` with `θ_k = ∫ f_k dt`, so the
//! generator becomes diagonal with eigenvalues `∫ μ_k dt`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};
use crate::evolution::{HamiltonianFamily, SamplingRule, TimeGrid};
use crate::fisher::dg_eigen_with_limit;
use crate::operator_algebra::{
    canonical_phase, eig_hermitian, hermiticity_defect, ComplexMatrix, ComplexVector, Eigen,
    HermitianOperator, I,
};

/// Largest tolerated Hermiticity defect of a synthesized control before
/// symmetrization.
pub const MAX_CONTROL_DEFECT: f64 = 1e-6;

/// Tolerance on the pulse area `(l + ½)π`.
pub const AREA_TOL: f64 = 1e-9;

type GaugeFn = dyn Fn(usize, f64) -> f64 + Send + Sync;

/// Choice of the free phase functions `f_k(t)`.
#[derive(Clone, Default)]
pub enum GaugeChoice {
    #[default]
    Zero,
    /// `f_k = ⟨ψ_k|H(t, g_c)|ψ_k⟩`, which removes the diagonal of `H` from `H_c`.
    CancelDiagonal,
    /// `f_k(t)` supplied by the caller as `(k, t) ↦ f`.
    Custom(Arc<GaugeFn>),
}

impl GaugeChoice {
    pub fn custom(f: impl Fn(usize, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    fn value(&self, k: usize, t: f64, psi: &ComplexVector, h: Option<&HermitianOperator>) -> f64 {
        match (self, h) {
            (Self::CancelDiagonal, Some(h)) => psi.dotc(&(h.matrix() * psi)).re,
            (Self::Custom(f), _) => f(k, t),
            _ => 0.0,
        }
    }
}

impl fmt::Debug for GaugeChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::CancelDiagonal => write!(f, "CancelDiagonal"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Eigen-tracks of `∂_gH(t, g_c)` sampled at every node and slice midpoint.
///
/// Point `p` sits at `t0 + p Δt / 2`, so node `j` is point `2j` and the
/// midpoint of slice `j` is point `2j + 1`.
#[derive(Clone, Debug)]
pub struct SpectralTracks {
    grid: TimeGrid,
    g_c: f64,
    gauge: GaugeChoice,
    times: Vec<f64>,
    mu: Vec<Vec<f64>>,
    vecs: Vec<Vec<ComplexVector>>,
    f: Vec<Vec<f64>>,
    theta: Vec<Vec<f64>>,
    lipschitz: f64,
}

impl SpectralTracks {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn g_c(&self) -> f64 {
        self.g_c
    }

    pub fn gauge(&self) -> &GaugeChoice {
        &self.gauge
    }

    pub fn n_tracks(&self) -> usize {
        self.mu.len()
    }

    pub fn n_points(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mu(&self, k: usize) -> &[f64] {
        &self.mu[k]
    }

    pub fn f(&self, k: usize) -> &[f64] {
        &self.f[k]
    }

    pub fn theta(&self, k: usize) -> &[f64] {
        &self.theta[k]
    }

    pub fn vector(&self, k: usize, p: usize) -> &ComplexVector {
        &self.vecs[k][p]
    }

    pub fn vectors_at(&self, p: usize) -> Vec<ComplexVector> {
        self.vecs.iter().map(|v| v[p].clone()).collect()
    }

    /// Point index of grid node `j`.
    pub fn node_point(j: usize) -> usize {
        2 * j
    }

    pub fn last_point(&self) -> usize {
        self.times.len() - 1
    }

    /// Largest observed `|Δμ| / Δt` between neighbouring points.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Index of the track point at time `t`, if `t` is one.
    pub fn point_at(&self, t: f64) -> Option<usize> {
        let x = 2.0 * (t - self.grid.t0()) / self.grid.dt();
        let p = x.round();
        if p < 0.0 || p as usize >= self.times.len() {
            return None;
        }
        let p = p as usize;
        ((self.times[p] - t).abs() <= 1e-9 * self.grid.dt()).then_some(p)
    }

    /// `(min_track, max_track)` at point `p`, failing if either extreme is
    /// shared by two tracks.
    pub fn extreme_tracks(&self, p: usize) -> Result<(usize, usize)> {
        let vals: Vec<f64> = self.mu.iter().map(|m| m[p]).collect();
        let scale = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let tol = crate::operator_algebra::DEGENERACY_TOL * (1.0 + scale);
        let argmin = argext(&vals, |a, b| a < b);
        let argmax = argext(&vals, |a, b| a > b);
        let shared = |k: usize| {
            vals.iter()
                .enumerate()
                .any(|(i, &v)| i != k && (v - vals[k]).abs() <= tol)
        };
        if vals.len() < 2 || shared(argmin) || shared(argmax) {
            return Err(QfiError::DegenerateExtremes { t: self.times[p] });
        }
        Ok((argmin, argmax))
    }

    /// `∫ (μ_max − μ_min) dt` by the midpoint rule over slice midpoints.
    pub fn gap_integral(&self) -> f64 {
        let dt = self.grid.dt();
        (0..self.grid.steps())
            .map(|j| {
                let p = 2 * j + 1;
                let hi = self.mu.iter().map(|m| m[p]).fold(f64::NEG_INFINITY, f64::max);
                let lo = self.mu.iter().map(|m| m[p]).fold(f64::INFINITY, f64::min);
                (hi - lo) * dt
            })
            .sum()
    }

    /// `∫ μ_k dt` by the midpoint rule.
    pub fn mu_integral(&self, k: usize) -> f64 {
        let dt = self.grid.dt();
        (0..self.grid.steps()).map(|j| self.mu[k][2 * j + 1] * dt).sum()
    }
}

fn argext(vals: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in vals.iter().enumerate() {
        if better(v, vals[best]) {
            best = i;
        }
    }
    best
}

/// Aligns a fresh eigensystem to the previous track vectors.
///
/// Each eigen-cluster claims the tracks whose weight inside the cluster
/// exceeds one half; degenerate clusters are rotated onto the previous
/// vectors by the polar factor of the overlap block. Phases are fixed so
/// that `⟨prev|new⟩` is real and nonnegative.
fn align(prev: &[ComplexVector], e: &Eigen, t: f64) -> Result<(Vec<f64>, Vec<ComplexVector>)> {
    let k = prev.len();
    let mut values = vec![0.0; k];
    let mut vectors: Vec<Option<ComplexVector>> = vec![None; k];
    let overlaps: Vec<Vec<Complex64>> = (0..k)
        .map(|c| {
            let v = e.vectors.column(c);
            prev.iter().map(|p| p.dotc(&v)).collect()
        })
        .collect();

    for cluster in e.clusters() {
        let m = cluster.len();
        let mut weights: Vec<(usize, f64)> = (0..k)
            .map(|track| {
                let w = cluster.clone().map(|c| overlaps[c][track].norm_sqr()).sum::<f64>();
                (track, w)
            })
            .collect();
        weights.sort_by(|a, b| b.1.total_cmp(&a.1));
        let chosen = &weights[..m];
        if let Some(&(_, w)) = chosen.iter().find(|(track, w)| *w <= 0.5 || vectors[*track].is_some()) {
            return Err(QfiError::TrackingAmbiguity { t, overlap: w });
        }
        let mut tracks: Vec<usize> = chosen.iter().map(|&(tr, _)| tr).collect();
        tracks.sort_unstable();

        if m == 1 {
            let c = cluster.start;
            let tr = tracks[0];
            let z = overlaps[c][tr];
            let phase = z.conj() / z.norm();
            vectors[tr] = Some(e.vector(c).map(|x| x * phase));
            values[tr] = e.values[c];
        } else {
            let w = e.vectors.columns(cluster.start, m).into_owned();
            let mut p = ComplexMatrix::zeros(k, m);
            for (i, &tr) in tracks.iter().enumerate() {
                p.set_column(i, &prev[tr]);
            }
            let a = w.adjoint() * &p;
            let svd = a.svd(true, true);
            let (u, v_t) = (svd.u.expect("left factor"), svd.v_t.expect("right factor"));
            let rotated = w * (u * v_t);
            let mean = e.values[cluster.clone()].iter().sum::<f64>() / m as f64;
            for (i, &tr) in tracks.iter().enumerate() {
                let v = rotated.column(i).into_owned();
                let z = prev[tr].dotc(&v);
                let phase = if z.norm() > 0.0 { z.conj() / z.norm() } else { Complex64::new(1.0, 0.0) };
                vectors[tr] = Some(v.map(|x| x * phase));
                values[tr] = mean;
            }
        }
    }
    Ok((values, vectors.into_iter().map(|v| v.expect("every track assigned")).collect()))
}

/// Eigen-decomposes `∂_gH(t, g_c)` at every node and slice midpoint and
/// links the eigenpairs into continuous, parallel-transported tracks.
///
/// Track `k` starts as the `k`-th eigenvector (ascending) at `t0`, using the
/// limit convention of [`crate::fisher::optimal_initial_state`] when
/// `∂_gH(t0)` is fully degenerate. The gauge phase `θ_k` is accumulated
/// with the midpoint rule so that it matches the discrete propagation.
pub fn build_tracks(
    fam: &dyn HamiltonianFamily,
    g_c: f64,
    grid: &TimeGrid,
    gauge: GaugeChoice,
) -> Result<SpectralTracks> {
    let n = fam.dim();
    let half = 0.5 * grid.dt();
    let n_points = 2 * grid.steps() + 1;
    let times: Vec<f64> = (0..n_points)
        .map(|p| if p == n_points - 1 { grid.t1() } else { grid.t0() + p as f64 * half })
        .collect();

    let mut mu: Vec<Vec<f64>> = vec![Vec::with_capacity(n_points); n];
    let mut vecs: Vec<Vec<ComplexVector>> = vec![Vec::with_capacity(n_points); n];
    let mut f: Vec<Vec<f64>> = vec![Vec::with_capacity(n_points); n];

    let start = dg_eigen_with_limit(fam, g_c, grid.t0(), grid.dt())?;
    let start_values = eig_hermitian(&fam.evaluate_dg(grid.t0(), g_c)?)?.values;
    let mut prev: Vec<ComplexVector> = (0..n).map(|k| canonical_phase(&start.vector(k))).collect();
    let mut lipschitz = 0.0_f64;

    for (p, &t) in times.iter().enumerate() {
        let (values, current) = if p == 0 {
            (start_values.clone(), prev.clone())
        } else {
            align(&prev, &eig_hermitian(&fam.evaluate_dg(t, g_c)?)?, t)?
        };
        let h = match gauge {
            GaugeChoice::CancelDiagonal => Some(fam.evaluate(t, g_c)?),
            _ => None,
        };
        for k in 0..n {
            if p > 0 {
                let step = (values[k] - mu[k][p - 1]).abs() / (t - times[p - 1]);
                lipschitz = lipschitz.max(step);
            }
            let fk = gauge.value(k, t, &current[k], h.as_ref());
            mu[k].push(values[k]);
            f[k].push(fk);
            vecs[k].push(current[k].clone());
        }
        prev = current;
    }

    let theta = f
        .iter()
        .map(|fk| {
            let mut th = vec![0.0; n_points];
            for j in 0..grid.steps() {
                let base = th[2 * j];
                let rate = fk[2 * j + 1];
                th[2 * j + 1] = base + rate * half;
                th[2 * j + 2] = base + rate * grid.dt();
            }
            th
        })
        .collect();

    Ok(SpectralTracks {
        grid: *grid,
        g_c,
        gauge,
        times,
        mu,
        vecs,
        f,
        theta,
        lipschitz,
    })
}

/// `∂_t ∂_gH` at `t`: closed form when the family has one, otherwise a
/// fourth-order central difference of the matrix.
fn dg_time_derivative(fam: &dyn HamiltonianFamily, g_c: f64, grid: &TimeGrid, t: f64) -> Result<HermitianOperator> {
    if let Some(d) = fam.evaluate_dg_dt(t, g_c) {
        return d;
    }
    let eps = grid.dt().min(1e-3);
    let d = |s: f64| fam.evaluate_dg(s, g_c).map(HermitianOperator::into_matrix);
    let m = (d(t - 2.0 * eps)? - d(t + 2.0 * eps)? + (d(t + eps)? - d(t - eps)?) * Complex64::new(8.0, 0.0))
        / Complex64::new(12.0 * eps, 0.0);
    Ok(HermitianOperator::symmetrized(&m)?.0)
}

/// `∂_t|ψ_k⟩` at `t` for the parallel-transported track vectors `psi` with
/// eigenvalues `mu`.
///
/// For a nondegenerate spectrum this is first-order perturbation theory,
/// `Σ_{j≠k} |ψ_j⟩⟨ψ_j|∂_t∂_gH|ψ_k⟩ / (μ_k − μ_j)`, which avoids differencing
/// eigenvectors (their rounding noise divided by a small step would leak
/// into the control). Degenerate spectra fall back to differencing
/// eigenvectors at `t ± ε` aligned to `psi`.
fn track_derivatives(
    fam: &dyn HamiltonianFamily,
    g_c: f64,
    grid: &TimeGrid,
    t: f64,
    psi: &[ComplexVector],
    mu: &[f64],
) -> Result<Vec<ComplexVector>> {
    let n = psi.len();
    let scale_mu = mu.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let separated = (0..n).all(|k| (0..k).all(|j| (mu[k] - mu[j]).abs() > crate::operator_algebra::DEGENERACY_TOL * scale_mu));
    if separated {
        let d = dg_time_derivative(fam, g_c, grid, t)?;
        let dpsi: Vec<ComplexVector> = psi.iter().map(|v| d.matrix() * v).collect();
        return Ok((0..n)
            .map(|k| {
                let mut out = ComplexVector::zeros(psi[k].len());
                for j in (0..n).filter(|&j| j != k) {
                    let c = psi[j].dotc(&dpsi[k]) / (mu[k] - mu[j]);
                    out += &psi[j] * c;
                }
                out
            })
            .collect());
    }

    let eps = (1e-2 * grid.dt()).min(1e-5);
    let at = |s: f64| -> Result<Vec<ComplexVector>> {
        Ok(align(psi, &eig_hermitian(&fam.evaluate_dg(s, g_c)?)?, s)?.1)
    };
    let scale = |v: ComplexVector, s: f64| v.map(|z| z * s);
    if t - eps < grid.t0() {
        let (a, b) = (at(t + eps)?, at(t + 2.0 * eps)?);
        Ok((0..n)
            .map(|k| scale(&a[k] * Complex64::new(4.0, 0.0) - &b[k] - psi[k].scale(3.0), 0.5 / eps))
            .collect())
    } else if t + eps > grid.t1() {
        let (a, b) = (at(t - eps)?, at(t - 2.0 * eps)?);
        Ok((0..n)
            .map(|k| scale(psi[k].scale(3.0) - &a[k] * Complex64::new(4.0, 0.0) + &b[k], 0.5 / eps))
            .collect())
    } else {
        let (plus, minus) = (at(t + eps)?, at(t - eps)?);
        Ok((0..n).map(|k| scale(&plus[k] - &minus[k], 0.5 / eps)).collect())
    }
}

/// The local frame at track point `p`: vectors, derivatives and `f_k`.
struct LocalFrame {
    psi: Vec<ComplexVector>,
    dpsi: Vec<ComplexVector>,
    f: Vec<f64>,
}

fn local_frame(fam: &dyn HamiltonianFamily, tracks: &SpectralTracks, p: usize) -> Result<LocalFrame> {
    let t = tracks.times[p];
    let psi = tracks.vectors_at(p);
    let mu: Vec<f64> = (0..tracks.n_tracks()).map(|k| tracks.mu[k][p]).collect();
    let dpsi = track_derivatives(fam, tracks.g_c, &tracks.grid, t, &psi, &mu)?;
    let f = (0..tracks.n_tracks()).map(|k| tracks.f[k][p]).collect();
    Ok(LocalFrame { psi, dpsi, f })
}

/// Control Hamiltonian at track point `p` plus its Hermiticity defect.
fn control_at(fam: &dyn HamiltonianFamily, tracks: &SpectralTracks, p: usize) -> Result<(HermitianOperator, f64)> {
    let frame = local_frame(fam, tracks, p)?;
    let h = fam.evaluate(tracks.times[p], tracks.g_c)?;
    let mut m = -h.into_matrix();
    for k in 0..tracks.n_tracks() {
        let psi = &frame.psi[k];
        m += (psi * psi.adjoint()).scale(frame.f[k]);
        m += (&frame.dpsi[k] * psi.adjoint()).map(|z| z * I);
    }
    let (op, defect) = HermitianOperator::symmetrized(&m)?;
    Ok((op, defect))
}

/// Synthesizes `H_c` at every sample time of `grid`.
pub fn optimal_control(
    fam: &dyn HamiltonianFamily,
    g_c: f64,
    grid: &TimeGrid,
    gauge: GaugeChoice,
) -> Result<(SpectralTracks, ControlSchedule)> {
    let tracks = build_tracks(fam, g_c, grid, gauge)?;
    let schedule = control_from_tracks(fam, &tracks)?;
    Ok((tracks, schedule))
}

/// `H_c` from already built tracks.
pub fn control_from_tracks(fam: &dyn HamiltonianFamily, tracks: &SpectralTracks) -> Result<ControlSchedule> {
    let grid = tracks.grid;
    let mut ops = Vec::with_capacity(grid.steps());
    let mut worst = 0.0_f64;
    for j in 0..grid.steps() {
        let p = match grid.rule() {
            SamplingRule::Midpoint => 2 * j + 1,
            SamplingRule::LeftEndpoint => 2 * j,
        };
        let (op, defect) = control_at(fam, tracks, p)?;
        worst = worst.max(defect);
        ops.push(op);
    }
    if worst > MAX_CONTROL_DEFECT {
        return Err(QfiError::NotHermitian { defect: worst });
    }
    ControlSchedule::from_samples(grid, tracks.g_c, grid.sample_times().collect(), ops, worst)
}

/// Amplitude envelope of a crossing pulse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseProfile {
    Flat,
    /// `A (1 + cos(2π(t − τ)/δt))`, vanishing smoothly at the window edges.
    #[default]
    RaisedCosine,
}

/// `H_a = h(t) [e^{i(θ_m − θ_n)} |ψ_n⟩⟨ψ_m| + h.c.]` on `[τ − δt/2, τ + δt/2]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossingPulse {
    pub tau: f64,
    pub delta_t: f64,
    pub n: usize,
    pub m: usize,
    pub l: i64,
    pub profile: PulseProfile,
    /// Peak of the flat profile, or `A` of the raised cosine.
    pub amplitude: f64,
    times: Vec<f64>,
    patterns: Vec<HermitianOperator>,
}

impl CrossingPulse {
    pub fn start(&self) -> f64 {
        self.tau - 0.5 * self.delta_t
    }

    pub fn end(&self) -> f64 {
        self.tau + 0.5 * self.delta_t
    }

    /// `∫ h dt` of the envelope.
    pub fn area(&self) -> f64 {
        self.amplitude * self.delta_t
    }

    /// `(−1)^{l+1} i`, the factor picked up by the transferred amplitude.
    pub fn acquired_phase(&self) -> Complex64 {
        let sign = if self.l.rem_euclid(2) == 0 { -1.0 } else { 1.0 };
        Complex64::new(0.0, sign)
    }

    pub fn envelope(&self, t: f64) -> f64 {
        if t < self.start() || t > self.end() {
            return 0.0;
        }
        match self.profile {
            PulseProfile::Flat => self.amplitude,
            PulseProfile::RaisedCosine => {
                let x = 2.0 * std::f64::consts::PI * (t - self.tau) / self.delta_t;
                self.amplitude * (1.0 + x.cos())
            }
        }
    }

    fn pattern_at(&self, t: f64) -> Option<HermitianOperator> {
        interpolate(&self.times, &self.patterns, t)
    }

    /// `H_a(t)`, or `None` outside the window.
    pub fn operator_at(&self, t: f64) -> Option<HermitianOperator> {
        if t < self.start() || t > self.end() {
            return None;
        }
        Some(self.pattern_at(t)?.scale(self.envelope(t)))
    }

    fn overlaps(&self, other: &CrossingPulse) -> bool {
        self.start() < other.end() && other.start() < self.end()
    }
}

/// Builds a pulse with area `(l + ½)π` across the crossing at `tau`.
pub fn crossing_pulse(
    tracks: &SpectralTracks,
    tau: f64,
    n: usize,
    m: usize,
    delta_t: f64,
    l: i64,
    profile: PulseProfile,
) -> Result<CrossingPulse> {
    let area = (l as f64 + 0.5) * std::f64::consts::PI;
    crossing_pulse_with_area(tracks, tau, n, m, delta_t, l, profile, area)
}

/// As [`crossing_pulse`] with an explicit envelope area, which must equal
/// `(l + ½)π` within [`AREA_TOL`].
#[allow(clippy::too_many_arguments)]
pub fn crossing_pulse_with_area(
    tracks: &SpectralTracks,
    tau: f64,
    n: usize,
    m: usize,
    delta_t: f64,
    l: i64,
    profile: PulseProfile,
    area: f64,
) -> Result<CrossingPulse> {
    let required = (l as f64 + 0.5) * std::f64::consts::PI;
    if (area - required).abs() > AREA_TOL {
        return Err(QfiError::InvalidPulse(format!(
            "area {area} differs from (l + 1/2)π = {required}"
        )));
    }
    if n == m || n >= tracks.n_tracks() || m >= tracks.n_tracks() {
        return Err(QfiError::InvalidPulse(format!("invalid track pair ({n}, {m})")));
    }
    if !(delta_t > 0.0 && delta_t.is_finite()) {
        return Err(QfiError::InvalidPulse(format!("window width {delta_t} must be positive")));
    }
    let (lo, hi) = (tau - 0.5 * delta_t, tau + 0.5 * delta_t);
    let span = tracks.grid();
    if lo < span.t0() || hi > span.t1() {
        return Err(QfiError::InvalidPulse(format!(
            "window [{lo}, {hi}] leaves the grid span [{}, {}]",
            span.t0(),
            span.t1()
        )));
    }

    // Keep one track point on either side so interpolation covers the window.
    let first = tracks.times.partition_point(|&t| t < lo).saturating_sub(1);
    let last = (tracks.times.partition_point(|&t| t <= hi) + 1).min(tracks.n_points());
    let mut times = Vec::with_capacity(last - first);
    let mut patterns = Vec::with_capacity(last - first);
    for p in first..last {
        let phase = Complex64::from_polar(1.0, tracks.theta[m][p] - tracks.theta[n][p]);
        let half = (tracks.vecs[n][p].clone() * tracks.vecs[m][p].adjoint()).map(|z| z * phase);
        let (op, _) = HermitianOperator::symmetrized(&(&half + half.adjoint()))?;
        times.push(tracks.times[p]);
        patterns.push(op);
    }

    Ok(CrossingPulse {
        tau,
        delta_t,
        n,
        m,
        l,
        profile,
        amplitude: area / delta_t,
        times,
        patterns,
    })
}

/// Piecewise-linear interpolation of operator samples; `None` outside.
fn interpolate(times: &[f64], ops: &[HermitianOperator], t: f64) -> Option<HermitianOperator> {
    let (first, last) = (*times.first()?, *times.last()?);
    if times.len() == 1 {
        return Some(ops[0].clone());
    }
    let tol = 1e-12 * (1.0 + first.abs().max(last.abs()));
    if t < first - tol || t > last + tol {
        return None;
    }
    let i = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
    let (t0, t1) = (times[i - 1], times[i]);
    let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
    if w == 0.0 {
        return Some(ops[i - 1].clone());
    }
    if w == 1.0 {
        return Some(ops[i].clone());
    }
    Some(&ops[i - 1].scale(1.0 - w) + &ops[i].scale(w))
}

/// Control Hamiltonian sampled on a time grid, plus crossing pulses.
///
/// `H_c` is stored at the grid's sample times and interpolated linearly in
/// between (held constant beyond the first and last sample). The parameter
/// `g_c` is frozen: the schedule never depends on the estimated `g`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControlSchedule {
    grid: TimeGrid,
    g_c: f64,
    times: Vec<f64>,
    base: Vec<HermitianOperator>,
    pulses: Vec<CrossingPulse>,
    hermiticity_defect: f64,
}

impl ControlSchedule {
    pub fn from_samples(
        grid: TimeGrid,
        g_c: f64,
        times: Vec<f64>,
        base: Vec<HermitianOperator>,
        hermiticity_defect: f64,
    ) -> Result<Self> {
        if times.len() != base.len() || times.is_empty() {
            return Err(QfiError::InvalidArgument(format!(
                "{} sample times for {} operators",
                times.len(),
                base.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QfiError::InvalidArgument("sample times must increase".into()));
        }
        let dim = base[0].dim();
        if let Some(op) = base.iter().find(|op| op.dim() != dim) {
            return Err(QfiError::DimMismatch {
                expected: dim,
                found: op.dim(),
            });
        }
        Ok(Self {
            grid,
            g_c,
            times,
            base,
            pulses: Vec::new(),
            hermiticity_defect,
        })
    }

    /// Samples `f(t)` at the grid's sample times.
    pub fn from_fn(grid: TimeGrid, g_c: f64, f: impl Fn(f64) -> Result<HermitianOperator>) -> Result<Self> {
        let times: Vec<f64> = grid.sample_times().collect();
        let base = times.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        Self::from_samples(grid, g_c, times, base, 0.0)
    }

    pub fn zero(dim: usize, grid: TimeGrid, g_c: f64) -> Result<Self> {
        Self::from_fn(grid, g_c, |_| Ok(HermitianOperator::zeros(dim)))
    }

    pub fn dim(&self) -> usize {
        self.base[0].dim()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn g_c(&self) -> f64 {
        self.g_c
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn base(&self) -> &[HermitianOperator] {
        &self.base
    }

    pub fn pulses(&self) -> &[CrossingPulse] {
        &self.pulses
    }

    /// Largest Hermiticity defect removed by symmetrization.
    pub fn hermiticity_defect(&self) -> f64 {
        self.hermiticity_defect
    }

    /// `H_c(t)` without pulses.
    pub fn base_at(&self, t: f64) -> HermitianOperator {
        let clamped = t.clamp(self.times[0], self.times[self.times.len() - 1]);
        interpolate(&self.times, &self.base, clamped).expect("clamped into range")
    }

    /// `H_c(t) + Σ H_a(t)`.
    pub fn operator_at(&self, t: f64) -> HermitianOperator {
        let mut op = self.base_at(t);
        for pulse in &self.pulses {
            if let Some(a) = pulse.operator_at(t) {
                op = &op + &a;
            }
        }
        op
    }

    pub fn add_pulse(&mut self, pulse: CrossingPulse) -> Result<()> {
        if pulse.patterns.first().map(|p| p.dim()) != Some(self.dim()) {
            return Err(QfiError::DimMismatch {
                expected: self.dim(),
                found: pulse.patterns.first().map_or(0, |p| p.dim()),
            });
        }
        if self.pulses.iter().any(|p| p.overlaps(&pulse)) {
            return Err(QfiError::WindowOverlap {
                start: pulse.start(),
                end: pulse.end(),
            });
        }
        self.pulses.push(pulse);
        self.pulses.sort_by(|a, b| a.tau.total_cmp(&b.tau));
        Ok(())
    }

    /// Phase factor from all pulses that moved amplitude from track `n` to
    /// track `m`, in time order.
    pub fn pulse_phase(&self) -> Complex64 {
        self.pulses
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, p| acc * p.acquired_phase())
    }
}

/// A crossing of two tracks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub tau: f64,
    pub n: usize,
    pub m: usize,
    /// Set when the crossing changes which track is the maximum or minimum.
    pub actionable: bool,
}

/// Sign changes of `μ_n − μ_m` for every track pair, in time order.
///
/// The crossing time is the linear-interpolation root; a run of exact zeros
/// counts as a crossing only if the sign differs on either side, and is
/// reported at the run's centre.
pub fn detect_crossings(tracks: &SpectralTracks) -> Vec<Crossing> {
    let k = tracks.n_tracks();
    let np = tracks.n_points();
    let scale = tracks
        .mu
        .iter()
        .flat_map(|m| m.iter())
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    let tol = 1e-12 * (1.0 + scale);
    let sign = |d: f64| if d > tol { 1 } else if d < -tol { -1 } else { 0 };
    let mut out = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let d: Vec<f64> = (0..np).map(|p| tracks.mu[a][p] - tracks.mu[b][p]).collect();
            let mut last_nonzero: Option<usize> = None;
            for p in 0..np {
                let s = sign(d[p]);
                if s == 0 {
                    continue;
                }
                if let Some(q) = last_nonzero {
                    if sign(d[q]) != s {
                        let tau = if q + 1 == p {
                            let (t0, t1) = (tracks.times[q], tracks.times[p]);
                            t0 + (t1 - t0) * d[q] / (d[q] - d[p])
                        } else {
                            0.5 * (tracks.times[q + 1] + tracks.times[p - 1])
                        };
                        let actionable = extremes_differ(tracks, q, p);
                        out.push(Crossing { tau, n: a, m: b, actionable });
                    }
                }
                last_nonzero = Some(p);
            }
        }
    }
    out.sort_by(|x, y| x.tau.total_cmp(&y.tau));
    out
}

fn extremes_differ(tracks: &SpectralTracks, before: usize, after: usize) -> bool {
    let at = |p: usize| {
        let vals: Vec<f64> = tracks.mu.iter().map(|m| m[p]).collect();
        (argext(&vals, |a, b| a < b), argext(&vals, |a, b| a > b))
    };
    at(before) != at(after)
}

/// `H(t, g) + H_c(t) + Σ H_a(t)` with `∂_g` acting on `H` only.
pub struct ControlledFamily<F> {
    inner: F,
    schedule: ControlSchedule,
}

impl<F: HamiltonianFamily> ControlledFamily<F> {
    pub fn schedule(&self) -> &ControlSchedule {
        &self.schedule
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

pub fn total_hamiltonian<F: HamiltonianFamily>(fam: F, schedule: ControlSchedule) -> Result<ControlledFamily<F>> {
    if fam.dim() != schedule.dim() {
        return Err(QfiError::DimMismatch {
            expected: fam.dim(),
            found: schedule.dim(),
        });
    }
    Ok(ControlledFamily { inner: fam, schedule })
}

impl<F: HamiltonianFamily> HamiltonianFamily for ControlledFamily<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn evaluate(&self, t: f64, g: f64) -> Result<HermitianOperator> {
        Ok(&self.inner.evaluate(t, g)? + &self.schedule.operator_at(t))
    }

    fn evaluate_dg(&self, t: f64, g: f64) -> Result<HermitianOperator> {
        self.inner.evaluate_dg(t, g)
    }

    fn has_analytic_dg(&self) -> bool {
        self.inner.has_analytic_dg()
    }

    fn evaluate_dg_dt(&self, t: f64, g: f64) -> Option<Result<HermitianOperator>> {
        self.inner.evaluate_dg_dt(t, g)
    }
}

/// `H' = i (∂_tV) V† + V H_tot V†` with `V = Σ_k e^{iθ_k} |k⟩⟨ψ_k|`, at
/// track point `p`.
///
/// Under the optimal control this vanishes away from pulses and equals
/// `h(t) σ_nm` inside a pulse window.
pub fn rotating_frame_hamiltonian<F: HamiltonianFamily>(
    total: &ControlledFamily<F>,
    tracks: &SpectralTracks,
    g: f64,
    p: usize,
) -> Result<HermitianOperator> {
    let frame = local_frame(&total.inner, tracks, p)?;
    let n = tracks.n_tracks();
    let t = tracks.times[p];
    let mut v = ComplexMatrix::zeros(n, n);
    let mut dv = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let ph = Complex64::from_polar(1.0, tracks.theta[k][p]);
        let row = frame.psi[k].adjoint().map(|z| z * ph);
        let drow = (frame.psi[k].adjoint().map(|z| z * (I * frame.f[k])) + frame.dpsi[k].adjoint()).map(|z| z * ph);
        v.set_row(k, &row);
        dv.set_row(k, &drow);
    }
    let h = total.evaluate(t, g)?;
    let m = (&dv * v.adjoint()).map(|z| z * I) + &v * h.matrix() * v.adjoint();
    if hermiticity_defect(&m) > 1e-6 * (1.0 + crate::operator_algebra::max_abs(&m)) {
        return Err(QfiError::NotHermitian { defect: hermiticity_defect(&m) });
    }
    Ok(HermitianOperator::symmetrized(&m)?.0)
}
