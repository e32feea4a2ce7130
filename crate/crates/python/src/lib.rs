//! Python bindings: run bundled or user-supplied scenarios and get the run
//! summary back as a dict.

use momentum_mpc::config::{bundled_scenario, bundled_scenario_names, load_scenario, ScenarioConfig};
use momentum_mpc::output::csv_string;
use momentum_mpc::sim::{run_scenario, RunLog};
use momentum_mpc::ConfigError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_seed(mut config: ScenarioConfig, seed: Option<u64>) -> Result<ScenarioConfig, ConfigError> {
    if let Some(seed) = seed {
        config.simulation.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn simulate(config: &ScenarioConfig) -> Result<RunLog, String> {
    run_scenario(config).map_err(|e| e.to_string())
}

fn into_dict<'py>(py: Python<'py>, log: &RunLog, with_csv: bool) -> PyResult<Bound<'py, PyDict>> {
    let text = serde_json::to_string(&log.summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let summary = py.import("json")?.call_method1("loads", (text,))?;
    let dict = summary.cast_into::<PyDict>()?;
    dict.set_item("fell", log.fell())?;
    dict.set_item("ticks", log.ticks.len())?;
    if with_csv {
        dict.set_item("csv", csv_string(&log.ticks))?;
    }
    Ok(dict)
}

fn run_config<'py>(py: Python<'py>, config: ScenarioConfig, with_csv: bool) -> PyResult<Bound<'py, PyDict>> {
    let log = py.detach(|| simulate(&config)).map_err(PyRuntimeError::new_err)?;
    into_dict(py, &log, with_csv)
}

fn value_error(e: ConfigError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Names of the scenarios shipped with the library.
#[pyfunction]
fn list_scenarios() -> Vec<&'static str> {
    bundled_scenario_names().collect()
}

/// TOML text of a bundled scenario, a starting point for custom configs.
#[pyfunction]
fn scenario_toml(name: &str) -> PyResult<String> {
    Ok(bundled_scenario(name).map_err(value_error)?.to_toml_string())
}

/// Runs a bundled scenario name or a TOML file path.
#[pyfunction]
#[pyo3(signature = (scenario, seed=None, with_csv=false))]
fn run<'py>(py: Python<'py>, scenario: &str, seed: Option<u64>, with_csv: bool) -> PyResult<Bound<'py, PyDict>> {
    let config = load_scenario(scenario).and_then(|c| with_seed(c, seed)).map_err(value_error)?;
    run_config(py, config, with_csv)
}

/// Runs a scenario given as TOML text.
#[pyfunction]
#[pyo3(signature = (text, seed=None, with_csv=false))]
fn run_toml<'py>(py: Python<'py>, text: &str, seed: Option<u64>, with_csv: bool) -> PyResult<Bound<'py, PyDict>> {
    let config = ScenarioConfig::from_toml_str(text).and_then(|c| with_seed(c, seed)).map_err(value_error)?;
    run_config(py, config, with_csv)
}

#[pymodule]
fn momentum_mpc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_toml, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_toml, m)?)?;
    Ok(())
}
