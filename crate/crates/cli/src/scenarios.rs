use log::info;
use rayon::prelude::*;

use qfi_core::acceptance::crossing_outcome;
use qfi_core::adaptive::{simulate_protocol, AdaptiveConfig};
use qfi_core::control::{optimal_control, total_hamiltonian, GaugeChoice};
use qfi_core::evolution::{generator_h, richardson};
use qfi_core::fisher::{max_qfi, optimal_initial_state, qfi_from_generator};
use qfi_core::qubit_example::{
    control_for_omega, hamiltonian, qfi_b_nocontrol, qfi_b_optimal, qfi_omega_detuned, qfi_omega_nocontrol,
    qfi_omega_optimal, Parameter, RotatingFieldParams,
};
use qfi_core::{HamiltonianFamily, HermitianOperator, TimeGrid};

use crate::config::{ExperimentConfig, Parameters, Scenario};
use crate::error::CliError;
use crate::output::{Cell, Table};

type Res<T> = std::result::Result<T, CliError>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn gauge(parameter: Parameter) -> GaugeChoice {
    match parameter {
        Parameter::B => GaugeChoice::CancelDiagonal,
        Parameter::Omega => GaugeChoice::Zero,
    }
}

/// QFI of the optimal probe under the control synthesized on `grid`.
fn controlled_qfi(fam: &dyn HamiltonianFamily, g: f64, grid: &TimeGrid, gauge: GaugeChoice) -> Res<f64> {
    let (_, schedule) = optimal_control(fam, g, grid, gauge)?;
    let h = generator_h(&total_hamiltonian(fam, schedule)?, g, grid)?;
    Ok(qfi_from_generator(&h, &optimal_initial_state(fam, g, grid)?)?)
}

struct Point {
    nocontrol: f64,
    nocontrol_pipeline: f64,
    optimal: f64,
    optimal_pipeline: f64,
}

fn qubit_point(b: f64, w: f64, t: f64, steps: f64, parameter: Parameter) -> Res<Point> {
    let p = RotatingFieldParams::matched(b, w)?;
    let grid = TimeGrid::with_density(t, steps)?;
    let fam = hamiltonian(p, parameter);
    let g = fam.true_value();
    let (nocontrol, optimal) = match parameter {
        Parameter::B => (qfi_b_nocontrol(&p, t), qfi_b_optimal(t)),
        Parameter::Omega => (qfi_omega_nocontrol(&p, t), qfi_omega_optimal(&p, t)),
    };
    Ok(Point {
        nocontrol,
        nocontrol_pipeline: max_qfi(&generator_h(&fam, g, &grid)?)?,
        optimal,
        optimal_pipeline: controlled_qfi(&fam, g, &grid, gauge(parameter))?,
    })
}

fn sweep(p: &Parameters) -> Vec<(f64, f64)> {
    p.omega.iter().flat_map(|&w| p.t.iter().map(move |&t| (w, t))).collect()
}

fn qfi_table(name: &'static str, p: &Parameters, parameter: Parameter) -> Res<Table> {
    let steps = p.steps[0];
    let points: Vec<_> = sweep(p)
        .into_par_iter()
        .map(|(w, t)| qubit_point(p.b, w, t, steps, parameter).map(|pt| (w, t, pt)))
        .collect::<Res<_>>()?;
    let mut table = Table::new(
        name,
        &["omega", "T", "qfi_nocontrol", "qfi_nocontrol_pipeline", "qfi_optimal", "qfi_optimal_pipeline", "ratio", "rel_diff"],
    );
    for (w, t, pt) in points {
        let diff = rel(pt.nocontrol_pipeline, pt.nocontrol).max(rel(pt.optimal_pipeline, pt.optimal));
        table.push(vec![
            w.into(),
            t.into(),
            pt.nocontrol.into(),
            pt.nocontrol_pipeline.into(),
            pt.optimal.into(),
            pt.optimal_pipeline.into(),
            (pt.optimal / pt.nocontrol).into(),
            diff.into(),
        ]);
    }
    Ok(table)
}

fn detuned_generator(p: &RotatingFieldParams, grid: TimeGrid) -> Res<HermitianOperator> {
    let total = total_hamiltonian(hamiltonian(*p, Parameter::Omega), control_for_omega(p, grid)?)?;
    Ok(generator_h(&total, p.omega, &grid)?)
}

fn detuned_table(p: &Parameters) -> Res<Table> {
    let w = p.omega[0];
    let cases: Vec<(f64, f64)> = p.omega_c.iter().flat_map(|&c| p.t.iter().map(move |&t| (c, t))).collect();
    let rows: Vec<Vec<Cell>> = cases
        .into_par_iter()
        .map(|(wc, t)| {
            let params = RotatingFieldParams::new(p.b, w, wc)?;
            let grid = TimeGrid::with_density(t, p.steps[0])?;
            let h = if p.richardson {
                richardson(&detuned_generator(&params, grid)?, &detuned_generator(&params, grid.refined(2)?)?)?
            } else {
                detuned_generator(&params, grid)?
            };
            let pipeline = max_qfi(&h)?;
            let expansion = qfi_omega_detuned(&params, t);
            Ok(vec![
                wc.into(),
                params.delta_omega().into(),
                t.into(),
                qfi_omega_optimal(&params, t).into(),
                expansion.into(),
                pipeline.into(),
                rel(pipeline, expansion).into(),
            ])
        })
        .collect::<Res<_>>()?;
    let mut table = Table::new(
        "detuned-sweep",
        &["omega_c", "delta_omega", "T", "qfi_matched", "qfi_expansion", "qfi_pipeline", "rel_diff"],
    );
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

fn adaptive_table(p: &Parameters) -> Res<Table> {
    let mut cfg = AdaptiveConfig::new(p.i0, p.n, p.b, p.target_t, p.seed);
    cfg.omega = p.omega[0];
    cfg.rounds = p.rounds;
    cfg.replicas = p.replicas;
    cfg.steps_per_unit = p.steps[0];
    let trace = simulate_protocol(&cfg)?;
    if trace.below_threshold {
        log::warn!("I0 = {} is not above the threshold {}; the schedule shrinks", cfg.i0, cfg.threshold());
    }
    for r in &trace.rounds {
        info!(
            "round {}: T_n={:.6} I_analytic={:.6e} I_empirical={:.6e} elapsed={:.6e}",
            r.n, r.t_n, r.i_analytic, r.i_empirical, r.elapsed_total
        );
    }
    let mut table = Table::new("adaptive", &["replica", "round", "T_n", "omega_c", "estimate", "I_analytic"]);
    for r in &trace.rows {
        table.push(vec![
            r.replica.into(),
            r.round.into(),
            r.t_n.into(),
            r.omega_c.into(),
            r.estimate.into(),
            r.i_analytic.into(),
        ]);
    }
    Ok(table)
}

fn crossing_table(p: &Parameters) -> Res<Table> {
    let rows: Vec<Vec<Cell>> = p
        .l
        .par_iter()
        .map(|&l| {
            let o = crossing_outcome(l)?;
            Ok(vec![
                l.into(),
                o.tau.into(),
                o.population.into(),
                o.phase.re.into(),
                o.phase.im.into(),
                o.expected.re.into(),
                o.expected.im.into(),
                o.frame_error.into(),
            ])
        })
        .collect::<Res<_>>()?;
    let mut table = Table::new(
        "crossing-demo",
        &["l", "tau", "population", "phase_re", "phase_im", "expected_re", "expected_im", "frame_error"],
    );
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

fn convergence_table(p: &Parameters) -> Res<Table> {
    let cases: Vec<(f64, f64, f64)> =
        p.steps.iter().flat_map(|&s| sweep(p).into_iter().map(move |(w, t)| (s, w, t))).collect();
    let rows: Vec<Vec<Cell>> = cases
        .into_par_iter()
        .map(|(s, w, t)| {
            let b = qubit_point(p.b, w, t, s, Parameter::B)?;
            let o = qubit_point(p.b, w, t, s, Parameter::Omega)?;
            Ok(vec![
                s.into(),
                w.into(),
                t.into(),
                rel(b.nocontrol_pipeline, b.nocontrol).into(),
                rel(b.optimal_pipeline, b.optimal).into(),
                rel(o.nocontrol_pipeline, o.nocontrol).into(),
                rel(o.optimal_pipeline, o.optimal).into(),
            ])
        })
        .collect::<Res<_>>()?;
    let mut table = Table::new(
        "convergence",
        &["steps", "omega", "T", "rel_err_b_nocontrol", "rel_err_b_optimal", "rel_err_omega_nocontrol", "rel_err_omega_optimal"],
    );
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

pub fn run(cfg: &ExperimentConfig) -> Res<Table> {
    let p = &cfg.parameters;
    info!("running {} ({} threads)", cfg.scenario.name(), rayon::current_num_threads());
    let table = match cfg.scenario {
        Scenario::QfiB => qfi_table("qfi-b", p, Parameter::B),
        Scenario::QfiOmega => qfi_table("qfi-omega", p, Parameter::Omega),
        Scenario::DetunedSweep => detuned_table(p),
        Scenario::Adaptive => adaptive_table(p),
        Scenario::CrossingDemo => crossing_table(p),
        Scenario::Convergence => convergence_table(p),
    }?;
    info!("{} rows", table.rows.len());
    Ok(table)
}
