//! Python bindings: barrier functions, the safety filter, tracking envelopes,
//! plant dynamics and the experiment pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use romcbf::cbf::{self, ReducedCbf, Sigma};
use romcbf::experiment::runner::{build, certify_setup};
use romcbf::experiment::{self, CommandScript};
use romcbf::plants::quadrotor::{self, QuadrotorParams};
use romcbf::plants::single_integrator_rom;
use romcbf::sim::rollout as run_rollout;
use romcbf::simfun;
use romcbf::{Error, Vector};
use serde::Serialize;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidInput(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

/// A reduced-order control barrier function `h(y)`.
#[pyclass(name = "Cbf", frozen, from_py_object)]
#[derive(Clone)]
struct PyCbf(ReducedCbf);

#[pymethods]
impl PyCbf {
    #[getter]
    fn name(&self) -> &str {
        self.0.name()
    }

    fn value(&self, y: Vec<f64>) -> f64 {
        self.0.value(&Vector::from_vec(y))
    }

    fn gradient(&self, y: Vec<f64>) -> Vec<f64> {
        self.0.gradient(&Vector::from_vec(y)).as_slice().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Cbf({:?})", self.0.name())
    }
}

#[pyfunction]
fn circular_obstacle(center: Vec<f64>, radius: f64) -> PyResult<PyCbf> {
    cbf::circular_obstacle_cbf(&center, radius).map(PyCbf).map_err(py_err)
}

#[pyfunction]
fn smooth_combine(parts: Vec<PyCbf>, kappa: f64) -> PyResult<PyCbf> {
    let parts: Vec<ReducedCbf> = parts.into_iter().map(|p| p.0).collect();
    cbf::smooth_combine(&parts, kappa).map(PyCbf).map_err(py_err)
}

#[pyclass(name = "FilterGains", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyFilterGains(cbf::FilterGains);

#[pymethods]
impl PyFilterGains {
    /// `sigma=None` drops the disturbance-robustness term.
    #[new]
    #[pyo3(signature = (alpha, epsilon, mu, sigma=None))]
    fn new(alpha: f64, epsilon: f64, mu: f64, sigma: Option<f64>) -> PyResult<Self> {
        let sigma = sigma.map_or(Sigma::Omitted, Sigma::Value);
        cbf::FilterGains::new(alpha, epsilon, sigma, mu).map(Self).map_err(py_err)
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }

    #[getter]
    fn sigma(&self) -> Option<f64> {
        match self.0.sigma {
            Sigma::Omitted => None,
            Sigma::Value(s) => Some(s),
        }
    }

    fn __repr__(&self) -> String {
        format!("FilterGains(alpha={}, epsilon={}, mu={}, sigma={:?})", self.0.alpha, self.0.epsilon, self.0.mu, self.sigma())
    }
}

/// Filters `v_desired` at `y` for the planar single-integrator model.
#[pyfunction]
fn safety_filter(h: &PyCbf, gains: &PyFilterGains, y: Vec<f64>, v_desired: Vec<f64>) -> PyResult<Vec<f64>> {
    let rom = single_integrator_rom();
    let vd = Vector::from_vec(v_desired);
    let nominal = move |_: &Vector| vd.clone();
    cbf::safety_filter(&h.0, &rom, &gains.0, &nominal, &Vector::from_vec(y))
        .map(|v| v.as_slice().to_vec())
        .map_err(py_err)
}

#[pyclass(name = "TrackingEnvelope", frozen)]
struct PyTrackingEnvelope(simfun::TrackingEnvelope);

#[pymethods]
impl PyTrackingEnvelope {
    #[new]
    fn new(v0: f64, rho: f64, lam: f64, iota: f64) -> PyResult<Self> {
        simfun::TrackingEnvelope::new(v0, rho, lam, iota).map(Self).map_err(py_err)
    }

    fn bound(&self, t: f64) -> PyResult<f64> {
        self.0.bound(t).map_err(py_err)
    }

    fn asymptote(&self) -> f64 {
        self.0.asymptote()
    }
}

/// Quadrotor vector field at state `x` (10 entries) and input
/// `u = (ω_x, ω_y, ω_z, τ)` with default parameters.
#[pyfunction]
fn quadrotor_dynamics(x: Vec<f64>, u: Vec<f64>) -> PyResult<Vec<f64>> {
    if x.len() != quadrotor::STATE_DIM || u.len() != quadrotor::INPUT_DIM {
        return Err(PyValueError::new_err("quadrotor state has 10 entries and input has 4"));
    }
    quadrotor::quadrotor_dynamics(&QuadrotorParams::default(), &Vector::from_vec(x), &Vector::from_vec(u))
        .map(|d| d.as_slice().to_vec())
        .map_err(py_err)
}

#[pyclass(name = "ExperimentConfig", frozen)]
struct PyExperimentConfig(experiment::ExperimentConfig);

impl PyExperimentConfig {
    fn gains_for(&self, alpha: Option<f64>) -> cbf::FilterGains {
        let mut gains = self.0.gains;
        if let Some(a) = alpha {
            gains.alpha = a;
        }
        gains
    }
}

#[pymethods]
impl PyExperimentConfig {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        experiment::ExperimentConfig::load(&path).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        experiment::ExperimentConfig::from_json(text).map(Self).map_err(py_err)
    }

    #[getter]
    fn plant(&self) -> &'static str {
        self.0.plant.kind().name()
    }

    /// `(label, alpha, epsilon, mu, sigma)` per sweep item.
    fn items(&self) -> Vec<(Option<String>, f64, f64, f64, Option<f64>)> {
        self.0
            .items()
            .into_iter()
            .map(|(label, g)| {
                let sigma = match g.sigma {
                    Sigma::Omitted => None,
                    Sigma::Value(s) => Some(s),
                };
                (label, g.alpha, g.epsilon, g.mu, sigma)
            })
            .collect()
    }

    /// Certificate report for the base gains, optionally with `alpha` replaced.
    #[pyo3(signature = (seed=0, alpha=None))]
    fn certify<'py>(&self, py: Python<'py>, seed: u64, alpha: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
        let gains = self.gains_for(alpha);
        let report = py
            .detach(|| {
                let setup = build(&self.0, gains, seed)?;
                certify_setup(&self.0, &setup, gains, seed).map(|(_, r)| r)
            })
            .map_err(py_err)?;
        to_py(py, &report)
    }

    /// The configured rollout as a dict of logged columns.
    #[pyo3(signature = (seed=0, alpha=None))]
    fn rollout(&self, py: Python<'_>, seed: u64, alpha: Option<f64>) -> PyResult<BTreeMap<String, Vec<f64>>> {
        let gains = self.gains_for(alpha);
        let log = py
            .detach(|| {
                let setup = build(&self.0, gains, seed)?;
                let (cb, _) = certify_setup(&self.0, &setup, gains, seed)?;
                match run_rollout(&setup.sys, setup.kappa.as_ref(), &cb, &self.0.rollout) {
                    Ok(log) => Ok(log),
                    Err(Error::RolloutDiverged { log, .. }) => Ok(*log),
                    Err(e) => Err(e),
                }
            })
            .map_err(py_err)?;
        log.header()
            .into_iter()
            .map(|name| log.column(&name).map(|c| (name, c)).map_err(py_err))
            .collect()
    }

    /// Runs every sweep item, writing artifacts under `out`; returns the summaries.
    #[pyo3(signature = (out, seed=0))]
    fn run<'py>(&self, py: Python<'py>, out: PathBuf, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let outcomes = py.detach(|| experiment::run_experiment(&self.0, &out, seed)).map_err(py_err)?;
        let summaries: Vec<_> = outcomes.iter().map(|o| (&o.label, &o.summary)).collect();
        to_py(py, &summaries)
    }

    /// Replays a `t,vx_desired,vy_desired` command file; returns the summary.
    #[pyo3(signature = (commands, out=None))]
    fn replay<'py>(&self, py: Python<'py>, commands: PathBuf, out: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
        let script = CommandScript::load(&commands).map_err(py_err)?;
        let (_, summary) = py
            .detach(|| experiment::run_replay(&self.0, &script, out.as_deref()))
            .map_err(py_err)?;
        to_py(py, &summary)
    }
}

#[pymodule]
fn romcbf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCbf>()?;
    m.add_class::<PyFilterGains>()?;
    m.add_class::<PyTrackingEnvelope>()?;
    m.add_class::<PyExperimentConfig>()?;
    m.add_function(wrap_pyfunction!(circular_obstacle, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_combine, m)?)?;
    m.add_function(wrap_pyfunction!(safety_filter, m)?)?;
    m.add_function(wrap_pyfunction!(quadrotor_dynamics, m)?)?;
    Ok(())
}
