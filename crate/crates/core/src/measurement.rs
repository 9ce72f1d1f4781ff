//! The two-outcome projective measurement that saturates the gap bound,
//! its statistics, and seeded sampling of outcomes.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::control::{ControlSchedule, SpectralTracks};
use crate::error::{QfiError, Result};
use crate::operator_algebra::{ComplexVector, HermitianOperator, PureState};

/// Largest probability mass outside `span{|+⟩, |−⟩}` accepted by sampling.
pub const PROJECTION_TOL: f64 = 1e-6;

/// How the measured mean depends on `x = δg · ∫(μ_max − μ_min) dt`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// `⟨𝒪⟩ = cos x`; inverted on `[0, π]`.
    #[default]
    Cosine,
    /// Relative phase shifted by `π/2`, so `⟨𝒪⟩ = sin x`; inverted on
    /// `[−π/2, π/2]` and therefore sensitive to the sign of `δg`.
    Sine,
}

impl Quadrature {
    fn phase(self) -> f64 {
        match self {
            Self::Cosine => 0.0,
            Self::Sine => FRAC_PI_2,
        }
    }

    /// Half-width of the interval of `x` on which the mean is invertible.
    pub fn window(self) -> f64 {
        match self {
            Self::Cosine => std::f64::consts::PI,
            Self::Sine => FRAC_PI_2,
        }
    }
}

/// `𝒪 = |+⟩⟨+| − |−⟩⟨−|`.
#[derive(Clone, Debug)]
pub struct Observable {
    op: HermitianOperator,
    plus: PureState,
    minus: PureState,
    g_c: f64,
    gap_integral: f64,
    quadrature: Quadrature,
}

impl Observable {
    /// Builds the observable from an orthonormal pair.
    pub fn from_basis(plus: PureState, minus: PureState, g_c: f64, gap_integral: f64, quadrature: Quadrature) -> Result<Self> {
        if plus.dim() != minus.dim() {
            return Err(QfiError::DimMismatch {
                expected: plus.dim(),
                found: minus.dim(),
            });
        }
        let overlap = plus.inner(&minus).norm();
        if overlap > 1e-10 {
            return Err(QfiError::InvalidArgument(format!("basis states overlap by {overlap:e}")));
        }
        let (p, m) = (plus.amplitudes(), minus.amplitudes());
        let (op, _) = HermitianOperator::symmetrized(&(p * p.adjoint() - m * m.adjoint()))?;
        Ok(Self {
            op,
            plus,
            minus,
            g_c,
            gap_integral,
            quadrature,
        })
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn plus(&self) -> &PureState {
        &self.plus
    }

    pub fn minus(&self) -> &PureState {
        &self.minus
    }

    pub fn g_c(&self) -> f64 {
        self.g_c
    }

    /// `∫ (μ_max − μ_min) dt` the estimator is calibrated to.
    pub fn gap_integral(&self) -> f64 {
        self.gap_integral
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    /// `(|⟨+|ψ⟩|², |⟨−|ψ⟩|²)`.
    pub fn probabilities(&self, psi: &PureState) -> Result<(f64, f64)> {
        if psi.dim() != self.plus.dim() {
            return Err(QfiError::DimMismatch {
                expected: self.plus.dim(),
                found: psi.dim(),
            });
        }
        Ok((self.plus.inner(psi).norm_sqr(), self.minus.inner(psi).norm_sqr()))
    }

    /// Mean expected at detuning `δg = g − g_c`.
    pub fn model_mean(&self, delta_g: f64) -> f64 {
        (self.gap_integral * delta_g - self.quadrature.phase()).cos()
    }

    /// `ĝ = g_c + x / ∫gap` with `x` the principal inverse of the mean.
    pub fn invert(&self, mean: f64) -> Result<f64> {
        if self.gap_integral <= 0.0 {
            return Err(QfiError::ZeroGap);
        }
        let m = mean.clamp(-1.0, 1.0);
        let x = match self.quadrature {
            Quadrature::Cosine => m.acos(),
            Quadrature::Sine => m.asin(),
        };
        Ok(self.g_c + x / self.gap_integral)
    }
}

/// Phases picked up by the max and min branches from crossing pulses, and
/// the tracks those branches end on.
fn branch_phases(tracks: &SpectralTracks, schedule: Option<&ControlSchedule>) -> ((usize, Complex64), (usize, Complex64)) {
    // Tracks start in ascending order of the limit eigenbasis at t0.
    let (lo, hi) = (0, tracks.n_tracks() - 1);
    let one = Complex64::new(1.0, 0.0);
    let (mut max_b, mut min_b) = ((hi, one), (lo, one));
    for pulse in schedule.map(|s| s.pulses()).unwrap_or(&[]) {
        for branch in [&mut max_b, &mut min_b] {
            if branch.0 == pulse.n {
                *branch = (pulse.m, branch.1 * pulse.acquired_phase());
            } else if branch.0 == pulse.m {
                *branch = (pulse.n, branch.1 * pulse.acquired_phase());
            }
        }
    }
    (max_b, min_b)
}

/// `|±⟩ = (e^{−iθ_max(T)} |ψ_max(T)⟩ ± e^{iφ} e^{−iθ_min(T)} |ψ_min(T)⟩)/√2`
/// at the final track point, with the factors `(−1)^{l+1} i` of any
/// crossing pulses in `schedule` folded into the branch phases.
pub fn optimal_observable(
    tracks: &SpectralTracks,
    schedule: Option<&ControlSchedule>,
    quadrature: Quadrature,
) -> Result<Observable> {
    let p = tracks.last_point();
    tracks.extreme_tracks(p)?;
    let ((kmax, cmax), (kmin, cmin)) = branch_phases(tracks, schedule);
    let a: ComplexVector = tracks.vector(kmax, p) * (Complex64::from_polar(1.0, -tracks.theta(kmax)[p]) * cmax);
    let b: ComplexVector = tracks.vector(kmin, p)
        * (Complex64::from_polar(1.0, quadrature.phase() - tracks.theta(kmin)[p]) * cmin);
    let plus = PureState::new((&a + &b) * Complex64::new(FRAC_1_SQRT_2, 0.0))?;
    let minus = PureState::new((&a - &b) * Complex64::new(FRAC_1_SQRT_2, 0.0))?;
    Observable::from_basis(plus, minus, tracks.g_c(), tracks.gap_integral(), quadrature)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub mean: f64,
    pub variance: f64,
    /// Probability mass inside `span{|+⟩, |−⟩}`.
    pub in_span: f64,
    /// Set when the state has no weight on either outcome.
    pub degenerate: bool,
}

/// `⟨𝒪⟩` and `⟨𝒪²⟩ − ⟨𝒪⟩²`.
pub fn estimator_stats(psi: &PureState, obs: &Observable) -> Result<EstimatorStats> {
    let (pp, pm) = obs.probabilities(psi)?;
    let mean = pp - pm;
    let in_span = pp + pm;
    Ok(EstimatorStats {
        mean,
        variance: (in_span - mean * mean).max(0.0),
        in_span,
        degenerate: in_span <= 1e-12,
    })
}

/// Error propagation `⟨Δ𝒪²⟩ / |∂_{δg}⟨𝒪⟩|²` averaged over `repetitions`,
/// which is `1 / (N [∫(μ_max − μ_min) dt]²)` at every `δg`.
pub fn estimator_variance(tracks: &SpectralTracks, repetitions: u64) -> Result<f64> {
    let gap = tracks.gap_integral();
    if gap.abs() <= f64::MIN_POSITIVE || repetitions == 0 {
        return Err(QfiError::ZeroGap);
    }
    Ok(1.0 / (gap * gap * repetitions as f64))
}

/// Counts of `+1` and `−1` outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub plus: u64,
    pub minus: u64,
}

impl OutcomeCounts {
    pub fn shots(&self) -> u64 {
        self.plus + self.minus
    }

    pub fn mean(&self) -> f64 {
        (self.plus as f64 - self.minus as f64) / self.shots() as f64
    }
}

/// One CSV row of a shot record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub round: usize,
    pub shot: u64,
    pub outcome: i8,
}

fn plus_probability(psi: &PureState, obs: &Observable) -> Result<f64> {
    let (pp, pm) = obs.probabilities(psi)?;
    let residual = 1.0 - (pp + pm);
    if residual > PROJECTION_TOL {
        return Err(QfiError::ProjectionLoss { residual });
    }
    Ok((pp / (pp + pm)).clamp(0.0, 1.0))
}

/// `shots` draws of the two-outcome measurement, deterministic in `seed`.
pub fn sample_outcomes(psi: &PureState, obs: &Observable, shots: u64, seed: u64) -> Result<OutcomeCounts> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(psi, obs, shots, &mut rng)
}

/// As [`sample_outcomes`] with a caller-owned generator.
pub fn sample_with<R: Rng + ?Sized>(psi: &PureState, obs: &Observable, shots: u64, rng: &mut R) -> Result<OutcomeCounts> {
    if shots == 0 {
        return Err(QfiError::InvalidArgument("shots must be at least 1".into()));
    }
    let p = plus_probability(psi, obs)?;
    let plus = Binomial::new(shots, p)
        .map_err(|e| QfiError::Numerical(e.to_string()))?
        .sample(rng);
    Ok(OutcomeCounts {
        plus,
        minus: shots - plus,
    })
}

/// Shot-by-shot outcomes for record keeping.
pub fn sample_records(psi: &PureState, obs: &Observable, round: usize, shots: u64, seed: u64) -> Result<Vec<OutcomeRecord>> {
    let p = plus_probability(psi, obs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..shots)
        .map(|shot| OutcomeRecord {
            round,
            shot,
            outcome: if rng.random_bool(p) { 1 } else { -1 },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{build_tracks, GaugeChoice};
    use crate::evolution::{FnFamily, TimeGrid};
    use crate::operator_algebra::{pauli, Axis, ONE};

    fn sigma_z_tracks(gauge: GaugeChoice) -> SpectralTracks {
        let fam = FnFamily::new(2, |_, g| pauli(Axis::Z).scale(g / 2.0).into_matrix())
            .with_derivative(|_, _| pauli(Axis::Z).scale(0.5).into_matrix());
        build_tracks(&fam, 0.8, &TimeGrid::new(0.0, 1.5, 30).unwrap(), gauge).unwrap()
    }

    #[test]
    fn static_basis_carries_energy_phases() {
        let tracks = sigma_z_tracks(GaugeChoice::CancelDiagonal);
        let obs = optimal_observable(&tracks, None, Quadrature::Cosine).unwrap();
        let (ep, em) = (0.4, -0.4);
        let t = 1.5;
        let expected = [Complex64::from_polar(FRAC_1_SQRT_2, -ep * t), Complex64::from_polar(FRAC_1_SQRT_2, -em * t)];
        let plus = obs.plus().amplitudes();
        // Compare up to a global phase.
        let ph = plus[0] / expected[0];
        assert!((ph.norm() - 1.0).abs() < 1e-12);
        assert!((plus[1] - expected[1] * ph).norm() < 1e-12);
        assert!((obs.gap_integral() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn stats_at_zero_detuning_and_orthogonal_state() {
        let tracks = sigma_z_tracks(GaugeChoice::Zero);
        let obs = optimal_observable(&tracks, None, Quadrature::Cosine).unwrap();
        let s = estimator_stats(obs.plus(), &obs).unwrap();
        assert!((s.mean - 1.0).abs() < 1e-12 && s.variance < 1e-12);

        let plus = PureState::basis(3, 0);
        let minus = PureState::basis(3, 2);
        let obs3 = Observable::from_basis(plus, minus, 0.0, 1.0, Quadrature::Cosine).unwrap();
        let s = estimator_stats(&PureState::basis(3, 1), &obs3).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.variance, 0.0);
        assert!(s.degenerate);
        assert!(matches!(
            sample_outcomes(&PureState::basis(3, 1), &obs3, 10, 1),
            Err(QfiError::ProjectionLoss { .. })
        ));
    }

    #[test]
    fn variance_is_reciprocal_gap_squared() {
        let tracks = sigma_z_tracks(GaugeChoice::Zero);
        let v = estimator_variance(&tracks, 1).unwrap();
        assert!((v - 1.0 / (1.5 * 1.5)).abs() < 1e-12);
        assert!((estimator_variance(&tracks, 10).unwrap() - v / 10.0).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic_and_unbiased() {
        let plus = PureState::basis(2, 0);
        let minus = PureState::basis(2, 1);
        let obs = Observable::from_basis(plus.clone(), minus, 0.0, 1.0, Quadrature::Cosine).unwrap();
        let all = sample_outcomes(&plus, &obs, 1000, 3).unwrap();
        assert_eq!(all.plus, 1000);

        let half = PureState::from_slice(&[ONE, ONE]).unwrap();
        let a = sample_outcomes(&half, &obs, 1_000_000, 42).unwrap();
        let b = sample_outcomes(&half, &obs, 1_000_000, 42).unwrap();
        assert_eq!(a, b);
        let freq = a.plus as f64 / 1e6;
        assert!((freq - 0.5).abs() < 3.0 * 0.5 / 1000.0);

        let rec = sample_records(&half, &obs, 2, 50, 9).unwrap();
        assert_eq!(rec.len(), 50);
        assert!(rec.iter().all(|r| r.round == 2 && (r.outcome == 1 || r.outcome == -1)));
    }

    #[test]
    fn inversion_round_trips() {
        let plus = PureState::basis(2, 0);
        let minus = PureState::basis(2, 1);
        for q in [Quadrature::Cosine, Quadrature::Sine] {
            let obs = Observable::from_basis(plus.clone(), minus.clone(), 1.0, 4.0, q).unwrap();
            let dg = 0.2;
            let back = obs.invert(obs.model_mean(dg)).unwrap();
            assert!((back - 1.2).abs() < 1e-12, "{q:?}");
        }
    }
}
