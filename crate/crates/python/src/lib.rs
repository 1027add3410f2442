//! Python bindings. Structured results cross over as plain dicts and lists.

use std::path::PathBuf;

use ibgp_transient::analyzer::AnalyzeConfig;
use ibgp_transient::cli::commands::analyze_traces;
use ibgp_transient::cli::{
    preset, preset_names, propagation_table, run_experiment, ExperimentReport, RunOptions, ScenarioFile, TraceSelection,
};
use ibgp_transient::trace::{read_trace, validate_trace, HardwareMapping};
use ibgp_transient::SEC;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_json<'py>(py: Python<'py>, json: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (json,))
}

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    from_json(py, &serde_json::to_string(value).map_err(value_error)?)
}

/// A scenario description: topology, routes, event, processing and probing.
#[pyclass(module = "ibgp_transient", frozen)]
struct Scenario {
    file: ScenarioFile,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        preset(name)
            .map(|file| Self { file })
            .ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let file = ScenarioFile::from_toml(text).map_err(value_error)?;
        file.resolve().map_err(value_error)?;
        Ok(Self { file })
    }

    /// Loads a scenario file, or `preset:<name>`.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = ScenarioFile::load(path).map_err(value_error)?;
        file.resolve().map_err(value_error)?;
        Ok(Self { file })
    }

    fn to_toml(&self) -> String {
        self.file.to_toml()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.file.name
    }

    #[getter]
    fn hash(&self) -> String {
        self.file.hash()
    }

    #[getter]
    fn samples(&self) -> usize {
        self.file.samples
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.file.seed
    }

    #[getter]
    fn prefixes(&self) -> u32 {
        self.file.prefixes
    }

    /// A copy with some parameters replaced.
    #[pyo3(signature = (*, samples=None, seed=None, prefixes=None, rate_pps=None, per_prefix_cost_us=None, jitter=None))]
    fn with_overrides(
        &self,
        samples: Option<usize>,
        seed: Option<u64>,
        prefixes: Option<u32>,
        rate_pps: Option<u64>,
        per_prefix_cost_us: Option<i64>,
        jitter: Option<f64>,
    ) -> PyResult<Self> {
        let mut f = self.file.clone();
        if let Some(v) = samples {
            f.samples = v;
        }
        if let Some(v) = seed {
            f.seed = v;
        }
        if let Some(v) = prefixes {
            f.prefixes = v;
        }
        if let Some(v) = rate_pps {
            f.probe.rate_pps = v;
        }
        if let Some(v) = per_prefix_cost_us {
            f.processing.per_prefix_cost_us = v;
        }
        if let Some(v) = jitter {
            f.processing.jitter = v;
        }
        f.resolve().map_err(value_error)?;
        Ok(Self { file: f })
    }

    /// Total propagation delay per router, for withdraw-like events.
    fn propagation<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let scn = self.file.resolve().map_err(value_error)?;
        to_py(py, &propagation_table(&scn).map_err(value_error)?)
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?}, hash={})", self.file.name, self.file.hash())
    }
}

/// The result of a simulation or an analysis.
#[pyclass(module = "ibgp_transient", frozen)]
struct Report {
    inner: ExperimentReport,
}

#[pymethods]
impl Report {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ExperimentReport::load(&path).map(|inner| Self { inner }).map_err(value_error)
    }

    #[getter]
    fn all_valid(&self) -> bool {
        self.inner.all_valid()
    }

    #[getter]
    fn meta<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.meta)
    }

    #[getter]
    fn samples<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.samples)
    }

    /// One dict per (sample, router, prefix) series.
    #[getter]
    fn rows<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.rows)
    }

    /// Percentiles over valid samples, keyed by router.
    #[getter]
    fn per_router<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let map: std::collections::BTreeMap<&str, _> =
            self.inner.per_router.iter().map(|r| (r.router.as_str(), &r.summary)).collect();
        to_py(py, &map)
    }

    #[getter]
    fn pooled<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.pooled)
    }

    #[getter]
    fn excluded<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.excluded)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Writes `report.json` and the CSV tables into `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.write_dir(&dir).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        let valid = self.inner.samples.iter().filter(|s| s.valid).count();
        format!("Report({:?}, {valid}/{} samples valid)", self.inner.meta.scenario, self.inner.samples.len())
    }
}

/// Runs every sample of `scenario`. With `trace_dir`, traces of the
/// samples chosen by `traces` ("all", "first" or "none") are written there,
/// together with `mapping.toml`.
#[pyfunction]
#[pyo3(signature = (scenario, *, trace_dir=None, traces="first"))]
fn simulate(py: Python<'_>, scenario: &Scenario, trace_dir: Option<PathBuf>, traces: &str) -> PyResult<Report> {
    let selection = match traces {
        "all" => TraceSelection::All,
        "first" => TraceSelection::First,
        "none" => TraceSelection::None,
        other => return Err(PyValueError::new_err(format!("traces must be all, first or none, not {other:?}"))),
    };
    let scn = scenario.file.resolve().map_err(value_error)?;
    if let Some(dir) = &trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
        HardwareMapping::from_network(&scn.net)
            .save(&dir.join("mapping.toml"))
            .map_err(value_error)?;
    }
    let opts = RunOptions {
        traces: selection,
        trace_dir,
        keep_traces: false,
    };
    let inner = py
        .detach(|| {
            run_experiment(&scn, &opts).map(|exp| ExperimentReport::from_experiment(&scn, &exp, propagation_table(&scn).ok()))
        })
        .map_err(value_error)?;
    Ok(Report { inner })
}

/// Analyzes captured traces against their hardware mapping.
#[pyfunction]
#[pyo3(signature = (traces, mapping, *, quiet_window_s=10.0))]
fn analyze(py: Python<'_>, traces: Vec<PathBuf>, mapping: PathBuf, quiet_window_s: f64) -> PyResult<Report> {
    let mapping = HardwareMapping::load(&mapping).map_err(value_error)?;
    mapping.validate().map_err(value_error)?;
    let cfg = AnalyzeConfig {
        quiet_window: (quiet_window_s * SEC as f64).round() as i64,
        ..AnalyzeConfig::default()
    };
    let inner = py
        .detach(|| {
            let loaded = traces
                .iter()
                .map(|p| read_trace(p).map(|t| (p.clone(), t)).map_err(|e| format!("{}: {e}", p.display())))
                .collect::<Result<Vec<_>, _>>()?;
            analyze_traces(&loaded, &mapping, &cfg).map_err(|e| e.to_string())
        })
        .map_err(PyValueError::new_err)?;
    Ok(Report { inner })
}

/// Structural findings of one trace; empty when the trace is well-formed.
#[pyfunction]
fn validate(trace: PathBuf, mapping: PathBuf) -> PyResult<Vec<String>> {
    let mapping = HardwareMapping::load(&mapping).map_err(value_error)?;
    let trace = read_trace(&trace).map_err(value_error)?;
    Ok(validate_trace(&trace.records, &mapping)
        .into_iter()
        .map(|f| match f.index {
            Some(i) => format!("record {i}: {:?}: {}", f.kind, f.detail),
            None => format!("{:?}: {}", f.kind, f.detail),
        })
        .collect())
}

#[pyfunction]
fn presets() -> Vec<String> {
    preset_names()
}

#[pymodule(name = "ibgp_transient")]
fn ibgp_transient_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
