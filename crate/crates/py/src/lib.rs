//! Python bindings: channel synthesis, training, baselines, evaluation and a few
//! physics helpers. Matrices cross the boundary as nested lists.

use std::path::Path;

use bdris::arch::BaselineKind;
use bdris::autodiff::{Tape, Tensor};
use bdris::harness::{self, RunConfig, RunOutput, SweepRecord};
use bdris::optimizer::Variant;
use bdris::physics::{susceptance_to_scattering, ChannelSet};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: bdris::Error) -> PyErr {
    match e.exit_code() {
        3 => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn config(toml: Option<&str>, seed: Option<u64>) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::from_toml(toml.unwrap_or("")).map_err(to_py)?;
    cfg.apply(&harness::Overrides {
        seed,
        ..Default::default()
    });
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

fn variant(s: &str) -> PyResult<Variant> {
    s.parse().map_err(to_py)
}

fn record<'py>(py: Python<'py>, r: &SweepRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("variant", r.variant.to_string())?;
    d.set_item("k_cc", r.k_cc)?;
    d.set_item("label", &r.label)?;
    d.set_item("objective", r.objective)?;
    d.set_item("metric", r.metric.to_string())?;
    d.set_item("seed", r.seed)?;
    d.set_item("config_hash", &r.config_hash)?;
    Ok(d)
}

/// Scattering matrix `(Re, Im)` of a symmetric susceptance matrix in siemens.
#[pyfunction]
fn scattering(b: Vec<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = b.len();
    if b.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err("susceptance matrix must be square"));
    }
    let t = Tensor::from_fn(n, n, |i, j| b[i][j]);
    let theta = susceptance_to_scattering(&Tape::new(), &t).map_err(to_py)?;
    let rows = |m: &Tensor| (0..n).map(|i| (0..n).map(|j| m.get(i, j)).collect()).collect();
    Ok((rows(&theta.re), rows(&theta.im)))
}

/// Circuit complexity of a reference architecture such as `"band:15"`.
#[pyfunction]
fn circuit_complexity(kind: &str, n_i: usize) -> PyResult<usize> {
    let kind: BaselineKind = kind.parse().map_err(to_py)?;
    Ok(bdris::arch::make_baseline(kind, n_i).map_err(to_py)?.circuit_complexity())
}

/// Writes a channel set; returns `(count, config_hash)`.
#[pyfunction]
#[pyo3(signature = (out, variant="ideal", config_toml=None, seed=None))]
fn synth(out: &str, variant: &str, config_toml: Option<&str>, seed: Option<u64>) -> PyResult<(usize, String)> {
    let cfg = config(config_toml, seed)?;
    let set = harness::cmd_synth(&cfg, self::variant(variant)?, Path::new(out)).map_err(to_py)?;
    Ok((set.meta.count, set.meta.config_hash))
}

/// Learned-architecture training; writes its outputs to `out_dir`.
#[pyfunction]
#[pyo3(signature = (channels, variant, k_cc, out_dir, config_toml=None, seed=None))]
fn train<'py>(
    py: Python<'py>,
    channels: &str,
    variant: &str,
    k_cc: usize,
    out_dir: &str,
    config_toml: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config(config_toml, seed)?;
    let set = ChannelSet::read(channels).map_err(to_py)?;
    let out = RunOutput {
        dir: Some(out_dir.into()),
        ..RunOutput::default()
    };
    let o = harness::cmd_train(&cfg, &set, self::variant(variant)?, k_cc, &out).map_err(to_py)?;
    record(py, &o.record)
}

/// Fixed-architecture training under a reference topology.
#[pyfunction]
#[pyo3(signature = (channels, variant, kind, config_toml=None, seed=None))]
fn baseline<'py>(
    py: Python<'py>,
    channels: &str,
    variant: &str,
    kind: &str,
    config_toml: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config(config_toml, seed)?;
    let set = ChannelSet::read(channels).map_err(to_py)?;
    let kind: BaselineKind = kind.parse().map_err(to_py)?;
    let o = harness::cmd_baseline(&cfg, &set, self::variant(variant)?, kind, &RunOutput::default())
        .map_err(to_py)?;
    record(py, &o.record)
}

/// Mean objective of saved parameters on a channel set, and the per-realization values.
#[pyfunction]
fn evaluate(params: &str, channels: &str) -> PyResult<(f64, Vec<f64>)> {
    let set = ChannelSet::read(channels).map_err(to_py)?;
    let (r, values) = harness::cmd_eval(Path::new(params), &set).map_err(to_py)?;
    Ok((r.objective, values))
}

#[pymodule]
fn bdris_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(scattering, m)?)?;
    m.add_function(wrap_pyfunction!(circuit_complexity, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add("Y0", bdris::physics::Y0)?;
    Ok(())
}
