//! Python bindings: dataset generation, tile-size formulas, and the
//! blocked / traditional / oracle pipelines with their I/O counters.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use emsnn_core::dataset_io::{self, GenSpec};
use emsnn_core::em_model::Backing;
use emsnn_core::error::EmError;
use emsnn_core::pipeline::{self, ExecParams, PipelineOutput};
use emsnn_core::{knn_phase, snn_cluster, units};

fn to_py_err(e: EmError) -> PyErr {
    match e {
        EmError::Io(_) => PyOSError::new_err(e.to_string()),
        EmError::Config(_) | EmError::Format(_) | EmError::OutOfBounds(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Deterministic Gaussian-blob dataset as a flat row-major list of floats.
#[pyfunction]
#[pyo3(signature = (n, d, clusters=1, spread=1.0, box_extent=100.0, seed=1))]
fn generate_points(
    n: u64,
    d: u32,
    clusters: u64,
    spread: f64,
    box_extent: f64,
    seed: u64,
) -> PyResult<Vec<f64>> {
    dataset_io::generate_points(&GenSpec {
        n_points: n,
        dims: d,
        n_clusters: clusters,
        spread,
        box_extent,
        seed,
    })
    .map_err(to_py_err)
}

/// Phase-1 tile size t1 for a budget of `m` bytes.
#[pyfunction]
fn phase1_tile_size(m: u64, d: u32, k: u32) -> PyResult<u64> {
    knn_phase::phase1_tile_size(m, d, k, 8).map_err(to_py_err)
}

/// Phase-2 tile size t2 for a budget of `m` bytes.
#[pyfunction]
fn phase2_tile_size(m: u64, k: u32) -> PyResult<u64> {
    snn_cluster::phase2_tile_size(m, k, 8).map_err(to_py_err)
}

/// Parses sizes like "64KiB" or "2MiB" into bytes.
#[pyfunction]
fn parse_size(text: &str) -> PyResult<u64> {
    units::parse_size(text).map_err(to_py_err)
}

fn output_dict<'py>(py: Python<'py>, out: &PipelineOutput) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("labels", &out.labels)?;
    dict.set_item("knn", &out.knn_rows)?;
    dict.set_item("edges", out.n_edges)?;
    dict.set_item("peak_pinned", out.peak_pinned)?;
    dict.set_item("phase1_tile", out.phase1_tile)?;
    dict.set_item("phase2_tile", out.phase2_tile)?;
    dict.set_item("total_transfers", out.total_transfers())?;
    let phases = PyList::empty(py);
    for phase in &out.phases {
        let p = PyDict::new(py);
        p.set_item("phase", &phase.phase)?;
        p.set_item("block_reads", phase.counters.block_reads)?;
        p.set_item("block_writes", phase.counters.block_writes)?;
        p.set_item("bytes_read", phase.counters.bytes_read)?;
        p.set_item("bytes_written", phase.counters.bytes_written)?;
        phases.append(p)?;
    }
    dict.set_item("phases", phases)?;
    Ok(dict)
}

/// Runs both phases and returns labels, the knn matrix, and per-phase
/// I/O counters. `algorithm` is "blocked", "traditional-lru", or
/// "oracle" (in-core reference, zero counters).
#[pyfunction]
#[pyo3(signature = (points, n, d, k, theta, m, b, algorithm="blocked", t1=None, t2=None))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    points: Vec<f64>,
    n: u64,
    d: u32,
    k: u32,
    theta: u32,
    m: u64,
    b: u64,
    algorithm: &str,
    t1: Option<u64>,
    t2: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let params = ExecParams {
        n,
        dims: d,
        k,
        theta,
        memory_budget_bytes: m,
        block_size_bytes: b,
        phase1_tile_override: t1,
        phase2_tile_override: t2,
    };
    let out = match algorithm {
        "blocked" => pipeline::run_blocked(&points, &params, Backing::memory()),
        "traditional-lru" => pipeline::run_traditional_lru(&points, &params, Backing::memory()),
        "oracle" => pipeline::run_oracle(&points, &params),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown algorithm '{other}' (expected blocked, traditional-lru, or oracle)"
            )))
        }
    }
    .map_err(to_py_err)?;
    output_dict(py, &out)
}

/// Writes a dataset file (.emsnn) readable by the CLI.
#[pyfunction]
fn write_dataset(path: &str, n: u64, d: u32, points: Vec<f64>) -> PyResult<()> {
    dataset_io::write_dataset(path.as_ref(), n, d, &points).map_err(to_py_err)
}

/// Reads a dataset file, returning (n, d, points).
#[pyfunction]
fn read_dataset(path: &str) -> PyResult<(u64, u32, Vec<f64>)> {
    let (header, points) = dataset_io::read_dataset(path.as_ref()).map_err(to_py_err)?;
    Ok((header.n_points, header.dims, points))
}

#[pymodule]
fn emsnn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate_points, m)?)?;
    m.add_function(wrap_pyfunction!(phase1_tile_size, m)?)?;
    m.add_function(wrap_pyfunction!(phase2_tile_size, m)?)?;
    m.add_function(wrap_pyfunction!(parse_size, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(write_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(read_dataset, m)?)?;
    Ok(())
}
