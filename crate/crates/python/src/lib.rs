//! Python bindings: rules, calibration, smoothing, the plant model, whole
//! simulated runs and the evaluator.
//!
//! Structured results (plant states, run summaries, metric reports) cross
//! the boundary as plain dicts.

use std::path::PathBuf;

use aquarium_core::domain::{self, ParameterKind, RawSample, Monotonic, ThresholdRule};
use aquarium_core::eventlog::replay_run;
use aquarium_core::metrics::{self, EvalConfig, GroundTruthTrace};
use aquarium_core::plant::{parse_duration, PlantConfig, PlantDriver, Script};
use aquarium_core::signal::{self, CalibrationCurve};
use aquarium_core::station::{self, SimulationConfig};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn kind_of(name: &str) -> PyResult<ParameterKind> {
    name.parse().map_err(|e: domain::UnknownKind| PyValueError::new_err(e.to_string()))
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Any serde value as native Python objects.
fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn direction_name(d: domain::Direction) -> &'static str {
    match d {
        domain::Direction::BelowLower => "below_lower",
        domain::Direction::AboveUpper => "above_upper",
        domain::Direction::LowFood => "low_food",
    }
}

/// The seven default control rules as dicts.
#[pyfunction]
fn default_rules(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &domain::default_rules())
}

/// Direction of the violation of `kind`'s rule by `value`, or `None`.
///
/// Uses the default rule unless `lower`/`upper` are given.
#[pyfunction]
#[pyo3(signature = (kind, value, lower=None, upper=None))]
fn violates(kind: &str, value: f64, lower: Option<f64>, upper: Option<f64>) -> PyResult<Option<&'static str>> {
    let kind = kind_of(kind)?;
    let rule = if lower.is_some() || upper.is_some() {
        ThresholdRule::new(kind, lower, upper, domain::RuleAction::Alert).map_err(value_err)?
    } else {
        *domain::RuleSet::default().get(kind).ok_or_else(|| PyValueError::new_err("no rule"))?
    };
    Ok(domain::violates(&rule, value).map(direction_name))
}

/// Linear counts-to-units map.
#[pyclass(name = "CalibrationCurve", module = "aquarium", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCurve(CalibrationCurve);

#[pymethods]
impl PyCurve {
    /// Full-scale default curve for `kind`.
    #[staticmethod]
    fn default_for(kind: &str) -> PyResult<Self> {
        Ok(PyCurve(CalibrationCurve::default_for(kind_of(kind)?)))
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind.as_str()
    }

    #[getter]
    fn slope(&self) -> f64 {
        self.0.slope
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.0.intercept
    }

    fn value_at(&self, counts: f64) -> f64 {
        self.0.value_at(counts)
    }

    fn counts_for(&self, value: f64) -> f64 {
        self.0.counts_for(value)
    }

    fn __repr__(&self) -> String {
        format!("CalibrationCurve({}, slope={}, intercept={})", self.0.kind, self.0.slope, self.0.intercept)
    }
}

/// Line through two `(counts, value)` points.
#[pyfunction]
fn fit_curve(kind: &str, p1: (u16, f64), p2: (u16, f64)) -> PyResult<PyCurve> {
    signal::fit_curve(kind_of(kind)?, p1, p2).map(PyCurve).map_err(value_err)
}

/// Calibrated value of a raw 12-bit reading.
#[pyfunction]
fn calibrate(counts: u16, curve: &PyCurve) -> PyResult<f64> {
    if counts > domain::ADC_MAX {
        return Err(PyValueError::new_err(format!("counts must be <= {}", domain::ADC_MAX)));
    }
    signal::calibrate(&RawSample::new(curve.0.kind, counts, Monotonic::ZERO), &curve.0).map_err(value_err)
}

#[pyclass(name = "SmoothingWindow", module = "aquarium")]
struct PyWindow(signal::SmoothingWindow);

#[pymethods]
impl PyWindow {
    #[new]
    #[pyo3(signature = (kind, capacity=signal::DEFAULT_WINDOW))]
    fn new(kind: &str, capacity: usize) -> PyResult<Self> {
        if capacity == 0 {
            return Err(PyValueError::new_err("capacity must be >= 1"));
        }
        Ok(PyWindow(signal::SmoothingWindow::with_capacity(kind_of(kind)?, capacity)))
    }

    /// Adds a value; returns `(mean, quality)`.
    fn smooth(&mut self, value: f64) -> (f64, &'static str) {
        let (mean, q) = self.0.smooth(value);
        let q = match q {
            domain::Quality::Valid => "valid",
            domain::Quality::Smoothing => "smoothing",
            domain::Quality::Invalid => "invalid",
        };
        (mean, q)
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().collect()
    }

    fn clear(&mut self) {
        self.0.clear();
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// The tank model driven by a scenario script.
#[pyclass(name = "Plant", module = "aquarium")]
struct PyPlant(PlantDriver);

#[pymethods]
impl PyPlant {
    /// `scenario` is script text; `None` gives the built-in 72 h script and
    /// `""` an unperturbed tank.
    #[new]
    #[pyo3(signature = (scenario=None))]
    fn new(scenario: Option<&str>) -> PyResult<Self> {
        let script = match scenario {
            None => Script::standard(),
            Some(text) => Script::parse(text).map_err(value_err)?,
        };
        Ok(PyPlant(PlantDriver::new(PlantConfig::default(), script)))
    }

    /// Advances to `seconds` of simulated time.
    fn advance_to(&mut self, seconds: f64) -> PyResult<()> {
        if seconds.is_nan() || seconds < 0.0 {
            return Err(PyValueError::new_err("time must be >= 0"));
        }
        let target = (seconds * 1000.0).round() as u64;
        if target < self.0.now_ms() {
            return Err(PyValueError::new_err("time cannot go backwards"));
        }
        self.0.advance_to(target);
        Ok(())
    }

    #[getter]
    fn time(&self) -> f64 {
        self.0.now_ms() as f64 / 1000.0
    }

    #[getter]
    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.0.state())
    }

    fn value(&self, kind: &str) -> PyResult<f64> {
        Ok(self.0.state().value(kind_of(kind)?))
    }
}

/// Runs a whole unpaced simulation and returns its summary.
#[pyfunction]
#[pyo3(signature = (log_dir, run_id, duration="72h", seed=None, scenario=None))]
fn run_simulation<'py>(
    py: Python<'py>,
    log_dir: PathBuf,
    run_id: &str,
    duration: &str,
    seed: Option<u64>,
    scenario: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = SimulationConfig::new(run_id, &log_dir);
    cfg.duration_s = parse_duration(duration).ok_or_else(|| PyValueError::new_err(format!("bad duration {duration:?}")))?;
    if let Some(text) = scenario {
        cfg.script = Script::parse(text).map_err(value_err)?;
    }
    if let Some(seed) = seed {
        cfg.noise.seed = seed;
    }
    std::fs::create_dir_all(&log_dir).map_err(|e| PyOSError::new_err(e.to_string()))?;
    let s = py.detach(|| station::run_simulation(cfg)).map_err(runtime_err)?;
    let d = PyDict::new(py);
    d.set_item("run_id", s.run_id)?;
    d.set_item("log_dir", s.log_dir)?;
    d.set_item("trace_path", s.trace_path)?;
    d.set_item("segments", s.segments)?;
    d.set_item("records", s.records)?;
    d.set_item("alerts", s.alerts)?;
    d.set_item("sim_seconds", s.sim_seconds)?;
    d.set_item("cycles", s.timing.cycles)?;
    d.set_item("worst_cycle_s", s.timing.max.as_secs_f64())?;
    d.set_item("published", s.published)?;
    Ok(d)
}

/// Scores a recorded run against its trace; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (log_dir, run_id, trace=None))]
fn evaluate<'py>(py: Python<'py>, log_dir: PathBuf, run_id: &str, trace: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let trace_file = trace.unwrap_or_else(|| station::trace_path(&log_dir, run_id));
    let report = py
        .detach(|| -> Result<_, String> {
            let trace = GroundTruthTrace::load(&trace_file).map_err(|e| e.to_string())?;
            let log = replay_run(&log_dir, run_id).map_err(|e| e.to_string())?;
            Ok(metrics::evaluate(&trace, &log.records, log.corrupt.len(), &EvalConfig::default()))
        })
        .map_err(PyOSError::new_err)?;
    to_py(py, &report)
}

#[pymodule(name = "aquarium")]
fn aquarium(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_rules, m)?)?;
    m.add_function(wrap_pyfunction!(violates, m)?)?;
    m.add_function(wrap_pyfunction!(fit_curve, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(run_simulation, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_class::<PyCurve>()?;
    m.add_class::<PyWindow>()?;
    m.add_class::<PyPlant>()?;
    Ok(())
}
