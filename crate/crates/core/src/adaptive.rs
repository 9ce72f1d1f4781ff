//! Adaptive feedback estimation of the field frequency: the analytic
//! recursion, round counting and a Monte-Carlo run of the estimate →
//! control → measure loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{build_tracks, total_hamiltonian, GaugeChoice};
use crate::error::{QfiError, Result};
use crate::evolution::{evolve_state, TimeGrid};
use crate::fisher::optimal_initial_state;
use crate::measurement::{estimator_stats, optimal_observable, sample_with, Quadrature};
use crate::qubit_example::{control_for_omega, hamiltonian, Parameter, RotatingFieldParams};

/// `1 − 1/(18N)`.
pub fn loss_factor(n: u64) -> f64 {
    1.0 - 1.0 / (18.0 * n as f64)
}

/// `T_n = √I_{n−1}`, `I_n = B² I_{n−1}² (1 − 1/(18N))`.
pub fn recursion_step(i_prev: f64, b: f64, n: u64) -> (f64, f64) {
    (i_prev.sqrt(), b * b * i_prev * i_prev * loss_factor(n))
}

/// Smallest `I0` for which the Fisher information grows round on round.
pub fn threshold_i0(b: f64, n: u64) -> f64 {
    1.0 / (b * b * loss_factor(n))
}

/// `I_n = I0^{2ⁿ} c^{2ⁿ−1}`, `c = B²(1 − 1/(18N))`.
pub fn closed_form_i(i0: f64, b: f64, n: u64, round: u32) -> f64 {
    let c = b * b * loss_factor(n);
    let p = 2f64.powi(round as i32);
    (p * i0.ln() + (p - 1.0) * c.ln()).exp()
}

/// `T_n = I0^{2^{n−2}} c^{2^{n−2} − 1/2}` for `n ≥ 1`.
pub fn closed_form_t(i0: f64, b: f64, n: u64, round: u32) -> f64 {
    let c = b * b * loss_factor(n);
    let p = 2f64.powi(round as i32 - 2);
    (p * i0.ln() + (p - 0.5) * c.ln()).exp()
}

fn default_omega() -> f64 {
    1.0
}

fn default_replicas() -> usize {
    200
}

fn default_steps_per_unit() -> f64 {
    32.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    /// Fisher information per measurement of the initial estimate.
    #[serde(rename = "I0")]
    pub i0: f64,
    /// Measurements per round.
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "B")]
    pub b: f64,
    pub target_t: f64,
    pub seed: u64,
    /// True frequency being estimated.
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Fixed number of feedback rounds; `rounds_needed` when absent.
    #[serde(default)]
    pub rounds: Option<usize>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_steps_per_unit")]
    pub steps_per_unit: f64,
    /// Start exactly on the true frequency and use exact means instead of
    /// sampled ones.
    #[serde(default)]
    pub noiseless: bool,
}

impl AdaptiveConfig {
    pub fn new(i0: f64, n: u64, b: f64, target_t: f64, seed: u64) -> Self {
        Self {
            i0,
            n,
            b,
            target_t,
            seed,
            omega: default_omega(),
            rounds: None,
            replicas: default_replicas(),
            steps_per_unit: default_steps_per_unit(),
            noiseless: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(QfiError::InvalidArgument(m));
        if !(self.i0 > 0.0 && self.i0.is_finite()) {
            return bad(format!("I0 = {} must be positive", self.i0));
        }
        if self.n == 0 {
            return bad("N must be at least 1".into());
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return bad(format!("B = {} must be positive", self.b));
        }
        if !(self.target_t > 0.0 && self.target_t.is_finite()) {
            return bad(format!("target_T = {} must be positive", self.target_t));
        }
        if !self.omega.is_finite() {
            return bad("omega must be finite".into());
        }
        if self.replicas == 0 {
            return bad("replicas must be at least 1".into());
        }
        if !(self.steps_per_unit > 0.0) {
            return bad("steps_per_unit must be positive".into());
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        threshold_i0(self.b, self.n)
    }

    /// Duration of each initial uncontrolled measurement, chosen so that
    /// `(4B² + ω²)/(4 N B² T0²) = 1/(N I0)`.
    pub fn initial_time(&self) -> f64 {
        (self.i0 * (4.0 * self.b * self.b + self.omega * self.omega)).sqrt() / (2.0 * self.b)
    }
}

/// Rounds until `T_n ≥ target_T`:
/// `⌈log₂(ln(BT√(1−1/18N)) / ln(B²I0(1−1/18N)))⌉ + 2`, at least 1.
pub fn rounds_needed(cfg: &AdaptiveConfig) -> Result<usize> {
    cfg.validate()?;
    let c = cfg.b * cfg.b * loss_factor(cfg.n);
    let threshold = 1.0 / c;
    if cfg.i0 <= threshold {
        return Err(QfiError::BelowThreshold {
            i0: cfg.i0,
            threshold,
        });
    }
    let num = (cfg.target_t * c.sqrt()).ln();
    if num <= 0.0 {
        return Ok(1);
    }
    let n = (num / (c * cfg.i0).ln()).log2().ceil() + 2.0;
    Ok(if n <= 0.0 { 1 } else { n as usize })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub n: usize,
    #[serde(rename = "T_n")]
    pub t_n: f64,
    pub i_analytic: f64,
    /// `1 / (N · mean squared error)` of the round's estimates.
    pub i_empirical: f64,
    /// Mean over replicas of the frequency the control was tuned to;
    /// absent for the uncontrolled round 0.
    pub omega_c: Option<f64>,
    pub elapsed_total: f64,
}

/// One CSV row: a replica's control frequency and estimate in one round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub replica: usize,
    pub round: usize,
    #[serde(rename = "T_n")]
    pub t_n: f64,
    pub omega_c: Option<f64>,
    pub estimate: f64,
    pub i_analytic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveTrace {
    pub rounds: Vec<RoundSummary>,
    pub rows: Vec<ReplicaRow>,
    /// `I0` at or below threshold: the analytic `I_n` decrease.
    pub below_threshold: bool,
}

impl AdaptiveTrace {
    pub fn final_round(&self) -> &RoundSummary {
        self.rounds.last().expect("trace has round 0")
    }
}

/// Evolution times `T_1..T_rounds` and Fisher informations `I_0..I_rounds`.
pub fn analytic_schedule(i0: f64, b: f64, n: u64, rounds: usize) -> (Vec<f64>, Vec<f64>) {
    let mut ts = Vec::with_capacity(rounds);
    let mut is = vec![i0];
    for _ in 0..rounds {
        let (t, i) = recursion_step(*is.last().unwrap(), b, n);
        ts.push(t);
        is.push(i);
    }
    (ts, is)
}

/// One controlled round: evolve for `t` under the control tuned to
/// `omega_c`, measure `shots` times and invert.
fn controlled_round(
    cfg: &AdaptiveConfig,
    round: usize,
    t: f64,
    omega_c: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    let params = RotatingFieldParams::new(cfg.b, cfg.omega, omega_c)?;
    let fam = hamiltonian(params, Parameter::Omega);
    let grid = TimeGrid::with_density(t, cfg.steps_per_unit)?;
    let tracks = build_tracks(&fam, omega_c, &grid, GaugeChoice::Zero)?;
    let obs = optimal_observable(&tracks, None, Quadrature::Sine)?;

    let phase = (cfg.omega - omega_c) * obs.gap_integral();
    if phase.abs() >= Quadrature::Sine.window() {
        return Err(QfiError::FringeAmbiguity { round, phase });
    }

    let psi0 = optimal_initial_state(&fam, omega_c, &grid)?;
    let total = total_hamiltonian(fam, control_for_omega(&params, grid)?)?;
    let psi = evolve_state(&total, cfg.omega, &grid, &psi0)?;
    let mean = match rng {
        Some(rng) => sample_with(&psi, &obs, cfg.n, rng)?.mean(),
        None => estimator_stats(&psi, &obs)?.mean,
    };
    obs.invert(mean)
}

/// Estimates `ω̂_0..ω̂_rounds` of one protocol run.
fn run_replica(cfg: &AdaptiveConfig, replica: usize, times: &[f64]) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(replica as u64);
    let mut estimates = Vec::with_capacity(times.len() + 1);
    let first = if cfg.noiseless {
        cfg.omega
    } else {
        let sd = (1.0 / (cfg.n as f64 * cfg.i0)).sqrt();
        cfg.omega + Normal::new(0.0, sd).map_err(|e| QfiError::Numerical(e.to_string()))?.sample(&mut rng)
    };
    estimates.push(first);
    for (k, &t) in times.iter().enumerate() {
        let omega_c = *estimates.last().unwrap();
        let rng = (!cfg.noiseless).then_some(&mut rng);
        estimates.push(controlled_round(cfg, k + 1, t, omega_c, rng)?);
    }
    Ok(estimates)
}

/// Runs `cfg.replicas` independent protocol instances, each on its own
/// stream of the seeded generator, and summarizes them per round.
pub fn simulate_protocol(cfg: &AdaptiveConfig) -> Result<AdaptiveTrace> {
    cfg.validate()?;
    let below_threshold = cfg.i0 <= cfg.threshold();
    let rounds = match cfg.rounds {
        Some(r) => r,
        None => rounds_needed(cfg)?,
    };
    let (times, infos) = analytic_schedule(cfg.i0, cfg.b, cfg.n, rounds);

    let runs: Vec<Vec<f64>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| run_replica(cfg, r, &times))
        .collect::<Result<_>>()?;

    let n_f = cfg.n as f64;
    let mut elapsed = n_f * cfg.initial_time();
    let mut summaries = Vec::with_capacity(rounds + 1);
    let mut rows = Vec::with_capacity(cfg.replicas * (rounds + 1));
    for k in 0..=rounds {
        let t_n = if k == 0 { cfg.initial_time() } else { times[k - 1] };
        if k > 0 {
            elapsed += n_f * t_n;
        }
        let mut mse = 0.0;
        let mut wc_sum = 0.0;
        for (r, est) in runs.iter().enumerate() {
            let omega_c = (k > 0).then(|| est[k - 1]);
            mse += (est[k] - cfg.omega).powi(2);
            wc_sum += omega_c.unwrap_or(0.0);
            rows.push(ReplicaRow {
                replica: r,
                round: k,
                t_n,
                omega_c,
                estimate: est[k],
                i_analytic: infos[k],
            });
        }
        mse /= cfg.replicas as f64;
        summaries.push(RoundSummary {
            n: k,
            t_n,
            i_analytic: infos[k],
            i_empirical: if mse > 0.0 { 1.0 / (n_f * mse) } else { f64::INFINITY },
            omega_c: (k > 0).then(|| wc_sum / cfg.replicas as f64),
            elapsed_total: elapsed,
        });
    }
    rows.sort_by_key(|r| (r.replica, r.round));
    Ok(AdaptiveTrace {
        rounds: summaries,
        rows,
        below_threshold,
    })
}
