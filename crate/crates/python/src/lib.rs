use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use qfi_cli::output::Cell;
use qfi_cli::{CliError, ExperimentConfig};
use qfi_core::acceptance;
use qfi_core::adaptive::{self, AdaptiveConfig};
use qfi_core::control::{optimal_control, total_hamiltonian, GaugeChoice};
use qfi_core::evolution::{generator_h, richardson};
use qfi_core::fisher::{max_qfi, optimal_initial_state, qfi_from_generator};
use qfi_core::qubit_example::{self as qe, Parameter, RotatingFieldParams};
use qfi_core::{QfiError, TimeGrid};

create_exception!(qfi_py, NumericalError, PyException);

fn to_py(e: CliError) -> PyErr {
    match e.kind() {
        "ConfigError" => PyValueError::new_err(e.to_string()),
        _ => NumericalError::new_err(e.to_string()),
    }
}

fn core(e: QfiError) -> PyErr {
    to_py(e.into())
}

fn qubit_qfi(b: f64, omega: f64, t: f64, steps: f64, control: bool, parameter: Parameter) -> Result<f64, QfiError> {
    let p = RotatingFieldParams::matched(b, omega)?;
    let grid = TimeGrid::with_density(t, steps)?;
    let fam = qe::hamiltonian(p, parameter);
    let g = fam.true_value();
    if !control {
        return max_qfi(&generator_h(&fam, g, &grid)?);
    }
    let gauge = match parameter {
        Parameter::B => GaugeChoice::CancelDiagonal,
        Parameter::Omega => GaugeChoice::Zero,
    };
    let (_, schedule) = optimal_control(&fam, g, &grid, gauge)?;
    let h = generator_h(&total_hamiltonian(&fam, schedule)?, g, &grid)?;
    qfi_from_generator(&h, &optimal_initial_state(&fam, g, &grid)?)
}

/// QFI of the field amplitude B after time `t`, optimally controlled or not.
#[pyfunction]
#[pyo3(signature = (b, omega, t, steps = 4096.0, control = true))]
fn qfi_b(py: Python<'_>, b: f64, omega: f64, t: f64, steps: f64, control: bool) -> PyResult<f64> {
    py.detach(|| qubit_qfi(b, omega, t, steps, control, Parameter::B)).map_err(core)
}

/// QFI of the rotation frequency after time `t`.
#[pyfunction]
#[pyo3(signature = (b, omega, t, steps = 4096.0, control = true))]
fn qfi_omega(py: Python<'_>, b: f64, omega: f64, t: f64, steps: f64, control: bool) -> PyResult<f64> {
    py.detach(|| qubit_qfi(b, omega, t, steps, control, Parameter::Omega)).map_err(core)
}

/// Closed-form QFIs `(b_nocontrol, b_optimal, omega_nocontrol, omega_optimal)`.
#[pyfunction]
fn closed_forms(b: f64, omega: f64, t: f64) -> PyResult<(f64, f64, f64, f64)> {
    let p = RotatingFieldParams::matched(b, omega).map_err(core)?;
    Ok((
        qe::qfi_b_nocontrol(&p, t),
        qe::qfi_b_optimal(t),
        qe::qfi_omega_nocontrol(&p, t),
        qe::qfi_omega_optimal(&p, t),
    ))
}

/// `(pipeline, expansion)` QFI of the frequency under a control tuned to `omega_c`.
#[pyfunction]
#[pyo3(signature = (b, omega, omega_c, t, steps = 4096.0))]
fn detuned_qfi(py: Python<'_>, b: f64, omega: f64, omega_c: f64, t: f64, steps: f64) -> PyResult<(f64, f64)> {
    py.detach(|| -> Result<(f64, f64), QfiError> {
        let p = RotatingFieldParams::new(b, omega, omega_c)?;
        let at = |grid: TimeGrid| {
            let total = total_hamiltonian(qe::hamiltonian(p, Parameter::Omega), qe::control_for_omega(&p, grid)?)?;
            generator_h(&total, omega, &grid)
        };
        let grid = TimeGrid::with_density(t, steps)?;
        let h = richardson(&at(grid)?, &at(grid.refined(2)?)?)?;
        Ok((max_qfi(&h)?, qe::qfi_omega_detuned(&p, t)))
    })
    .map_err(core)
}

#[pyfunction]
fn adaptive_schedule(i0: f64, b: f64, n: u64, rounds: usize) -> (Vec<f64>, Vec<f64>) {
    adaptive::analytic_schedule(i0, b, n, rounds)
}

#[pyfunction]
fn rounds_needed(i0: f64, n: u64, b: f64, target_t: f64) -> PyResult<usize> {
    adaptive::rounds_needed(&AdaptiveConfig::new(i0, n, b, target_t, 0)).map_err(core)
}

/// Per-round `(T_n, I_analytic, I_empirical)` of a simulated protocol.
#[pyfunction]
#[pyo3(signature = (i0, n, b, target_t, seed = 0, replicas = 200, omega = 1.0))]
fn simulate_adaptive(
    py: Python<'_>,
    i0: f64,
    n: u64,
    b: f64,
    target_t: f64,
    seed: u64,
    replicas: usize,
    omega: f64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let mut cfg = AdaptiveConfig::new(i0, n, b, target_t, seed);
    cfg.replicas = replicas;
    cfg.omega = omega;
    let trace = py.detach(|| adaptive::simulate_protocol(&cfg)).map_err(core)?;
    Ok(trace.rounds.iter().map(|r| (r.t_n, r.i_analytic, r.i_empirical)).collect())
}

/// `(population, phase, expected)` after the level-crossing pulse of area `(l + ½)π`.
#[pyfunction]
fn crossing_demo(l: i64) -> PyResult<(f64, (f64, f64), (f64, f64))> {
    let o = acceptance::crossing_outcome(l).map_err(core)?;
    Ok((o.population, (o.phase.re, o.phase.im), (o.expected.re, o.expected.im)))
}

/// Runs a TOML experiment config and returns `(columns, rows)` without
/// writing the output file.
#[pyfunction]
fn run_config(py: Python<'_>, toml: &str) -> PyResult<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let cfg = ExperimentConfig::from_toml(toml).map_err(to_py)?;
    let table = py.detach(|| qfi_cli::scenarios::run(&cfg)).map_err(to_py)?;
    let rows = table
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|c| match *c {
                    Cell::Float(x) => Some(x),
                    Cell::Int(i) => Some(i as f64),
                    Cell::Empty => None,
                })
                .collect()
        })
        .collect();
    Ok((table.columns.iter().map(|s| s.to_string()).collect(), rows))
}

/// `(passed, line)` for one acceptance criterion.
#[pyfunction]
fn verify(py: Python<'_>, criterion: u8) -> PyResult<(bool, String)> {
    let report = py
        .detach(|| acceptance::run_criterion(criterion))
        .ok_or_else(|| PyValueError::new_err(format!("no criterion {criterion}")))?;
    Ok((report.passed, report.line()))
}

#[pymodule]
pub fn qfi_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_function(wrap_pyfunction!(qfi_b, m)?)?;
    m.add_function(wrap_pyfunction!(qfi_omega, m)?)?;
    m.add_function(wrap_pyfunction!(closed_forms, m)?)?;
    m.add_function(wrap_pyfunction!(detuned_qfi, m)?)?;
    m.add_function(wrap_pyfunction!(adaptive_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(rounds_needed, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_adaptive, m)?)?;
    m.add_function(wrap_pyfunction!(crossing_demo, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
