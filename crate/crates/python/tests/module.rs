use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyDict>) -> R) -> R {
    Python::initialize();
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(qfi_py::qfi_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("q", module).unwrap();
        f(py, &globals)
    })
}

fn eval_f64(py: Python<'_>, g: &Bound<'_, PyDict>, expr: &str) -> f64 {
    let code = std::ffi::CString::new(expr).unwrap();
    py.eval(&code, Some(g), None).unwrap().extract().unwrap()
}

#[test]
fn controlled_amplitude_qfi_is_four_t_squared() {
    with_module(|py, g| {
        let q = eval_f64(py, g, "q.qfi_b(1.0, 1.5, 2.0, 1024.0)");
        assert!((q - 16.0).abs() < 1e-5, "{q}");
    });
}

#[test]
fn config_errors_surface_as_value_error() {
    with_module(|py, g| {
        let code = std::ffi::CString::new(
            "q.run_config('scenario = \"qfi-b\"\\n[parameters]\\nT = [2.0, 1.0]\\n[output]\\npath = \"-\"\\n')",
        )
        .unwrap();
        let err = py.eval(&code, Some(g), None).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
    });
}

#[test]
fn fringe_overrun_raises_numerical_error() {
    // With N = 100 the third round's phase spread exceeds the sine window.
    with_module(|py, g| {
        let code = std::ffi::CString::new("q.simulate_adaptive(10.0, 100, 1.0, 200.0, replicas=50)").unwrap();
        let err = py.eval(&code, Some(g), None).unwrap_err();
        let name: String = err.get_type(py).name().unwrap().extract().unwrap();
        assert_eq!(name, "NumericalError");
    });
}
