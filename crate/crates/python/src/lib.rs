//! Python bindings: parse hardware and kernels, rank plans, estimate and
//! simulate them.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dfplan::config::Config;
use dfplan::hwmodel::{self, HardwareModel, Severity};
use dfplan::kernelir::{self, GemmShape};
use dfplan::perfmodel;
use dfplan::pipeline::{self, Workload};
use dfplan::reuse::Candidate;
use dfplan::simref::{self, SimOptions};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A parsed hardware description.
#[pyclass(name = "Hardware", frozen)]
struct PyHardware {
    hw: Arc<HardwareModel>,
}

#[pymethods]
impl PyHardware {
    #[getter]
    fn num_cores(&self) -> usize {
        self.hw.num_cores()
    }

    #[getter]
    fn core_shape(&self) -> Vec<u32> {
        self.hw.core_shape()
    }

    /// `(dim, net)` name pairs a tile can be multicast along.
    #[getter]
    fn broadcast_dims(&self) -> Vec<(String, String)> {
        self.hw
            .broadcast_eligible_dims()
            .into_iter()
            .map(|(d, n)| (self.hw.dims[d].name.clone(), self.hw.interconnects[n].name.clone()))
            .collect()
    }

    fn describe(&self) -> String {
        self.hw.describe()
    }

    /// Diagnostics as `(severity, message)`.
    fn validate(&self) -> Vec<(String, String)> {
        self.hw
            .validate()
            .into_iter()
            .map(|d| {
                let sev = if d.severity == Severity::Error { "error" } else { "warning" };
                (sev.to_string(), d.message)
            })
            .collect()
    }

    fn __str__(&self) -> String {
        self.hw.to_string()
    }
}

/// A tile kernel.
#[pyclass(name = "Kernel", frozen)]
struct PyKernel {
    kernel: Arc<kernelir::Kernel>,
}

#[pymethods]
impl PyKernel {
    #[getter]
    fn name(&self) -> &str {
        &self.kernel.name
    }

    #[getter]
    fn grid_size(&self) -> u64 {
        self.kernel.grid_size()
    }

    #[getter]
    fn flops(&self) -> u64 {
        self.kernel.total_flops()
    }

    fn __str__(&self) -> String {
        self.kernel.to_string()
    }
}

/// Simulated execution of one plan.
#[pyclass(name = "SimResult", frozen, get_all)]
struct PySim {
    makespan: u64,
    peak_l1_bytes: u64,
    memory_bound: bool,
    dram_read_bytes: u64,
    dram_write_bytes: u64,
    noc_bytes: u64,
}

impl From<simref::SimResult> for PySim {
    fn from(s: simref::SimResult) -> Self {
        PySim {
            makespan: s.makespan,
            peak_l1_bytes: s.peak_l1_bytes,
            memory_bound: s.memory_bound,
            dram_read_bytes: s.dram_read_bytes,
            dram_write_bytes: s.dram_write_bytes,
            noc_bytes: s.noc_bytes,
        }
    }
}

/// A mapping plus data-movement plan, with its model estimate.
#[pyclass(name = "Candidate", frozen)]
struct PyCandidate {
    kernel: Arc<kernelir::Kernel>,
    cand: Candidate,
    est: perfmodel::Estimate,
}

#[pymethods]
impl PyCandidate {
    #[getter]
    fn id(&self) -> &str {
        &self.cand.id
    }

    #[getter]
    fn canonical(&self) -> &str {
        &self.cand.canonical
    }

    #[getter]
    fn mapping(&self) -> &str {
        &self.cand.mapping.encoding
    }

    #[getter]
    fn model_cycles(&self) -> u64 {
        self.est.total_cycles
    }

    #[getter]
    fn memory_bound(&self) -> bool {
        self.est.memory_bound
    }

    #[getter]
    fn dram_bytes(&self) -> u64 {
        self.est.dram_bytes()
    }

    #[getter]
    fn live_bytes(&self) -> u64 {
        self.cand.live_bytes
    }

    #[getter]
    fn kernel(&self) -> PyKernel {
        PyKernel { kernel: self.kernel.clone() }
    }

    fn simulate(&self, py: Python<'_>, hw: &PyHardware) -> PyResult<PySim> {
        py.detach(|| simref::simulate(&self.kernel, &hw.hw, &self.cand, SimOptions::default()))
            .map(PySim::from)
            .map_err(runtime_err)
    }

    fn __repr__(&self) -> String {
        format!("Candidate({} {} model={})", self.cand.id, self.cand.mapping.encoding, self.est.total_cycles)
    }
}

/// Result of `compile`: the model ranking and the simulated winner.
#[pyclass(name = "CompileResult", frozen)]
struct PyCompile {
    ranked: Vec<Py<PyCandidate>>,
    winner: usize,
    sim: Py<PySim>,
}

#[pymethods]
impl PyCompile {
    #[getter]
    fn num_candidates(&self) -> usize {
        self.ranked.len()
    }

    #[getter]
    fn winner_rank(&self) -> usize {
        self.winner + 1
    }

    #[getter]
    fn winner(&self, py: Python<'_>) -> Py<PyCandidate> {
        self.ranked[self.winner].clone_ref(py)
    }

    #[getter]
    fn winner_sim(&self, py: Python<'_>) -> Py<PySim> {
        self.sim.clone_ref(py)
    }

    /// The first `n` candidates by model cycles.
    fn top(&self, py: Python<'_>, n: usize) -> Vec<Py<PyCandidate>> {
        self.ranked.iter().take(n).map(|c| c.clone_ref(py)).collect()
    }
}

#[pyfunction]
fn parse_hardware(text: &str) -> PyResult<PyHardware> {
    let hw = hwmodel::parse_hardware(text).map_err(value_err)?;
    Ok(PyHardware { hw: Arc::new(hw) })
}

#[pyfunction]
fn sample_hardware(name: &str) -> PyResult<PyHardware> {
    let text = match name {
        "wormhole" => hwmodel::samples::WORMHOLE,
        "mesh4x8" => hwmodel::samples::MESH_4X8,
        "ring1x8" => hwmodel::samples::RING_1X8,
        "triple_ring" => hwmodel::samples::TRIPLE_RING,
        "mesh2x2" => hwmodel::samples::MESH_2X2,
        _ => return Err(PyValueError::new_err(format!("unknown sample `{name}`"))),
    };
    parse_hardware(text)
}

#[pyfunction]
fn parse_kernel(text: &str) -> PyResult<PyKernel> {
    let k = kernelir::parse_kernel(text).map_err(value_err)?;
    Ok(PyKernel { kernel: Arc::new(k) })
}

#[pyfunction]
#[pyo3(signature = (m, n, k, bm=128, bn=128, bk=128, elem_bytes=2))]
fn gemm(m: u64, n: u64, k: u64, bm: u64, bn: u64, bk: u64, elem_bytes: u64) -> PyResult<PyKernel> {
    if [m, n, k, bm, bn, bk, elem_bytes].contains(&0) {
        return Err(PyValueError::new_err("gemm sizes must be positive"));
    }
    let kernel = kernelir::gemm(&GemmShape { m, n, k, bm, bn, bk, elem_bytes });
    Ok(PyKernel { kernel: Arc::new(kernel) })
}

/// Ranks every plan for `kernel`, or for a GEMM / attention problem swept
/// over block sizes, and simulates the best `topk`.
#[pyfunction]
#[pyo3(signature = (hw, kernel=None, gemm=None, flashattention=None, topk=5))]
fn compile(
    py: Python<'_>,
    hw: &PyHardware,
    kernel: Option<&PyKernel>,
    gemm: Option<(u64, u64, u64)>,
    flashattention: Option<(u64, u64, u64)>,
    topk: usize,
) -> PyResult<PyCompile> {
    let work = match (kernel, gemm, flashattention) {
        (Some(k), None, None) => Workload::Kernel((*k.kernel).clone()),
        (None, Some((m, n, k)), None) => Workload::Gemm { m, n, k },
        (None, None, Some((heads, seq, head_dim))) => Workload::FlashAttention { heads, seq, head_dim },
        _ => return Err(PyValueError::new_err("pass exactly one of kernel, gemm or flashattention")),
    };
    if topk == 0 {
        return Err(PyValueError::new_err("topk must be at least 1"));
    }
    let cfg = Config { topk, ..Config::default() };
    let hw_model = hw.hw.clone();
    let r = py.detach(|| pipeline::compile(&hw_model, &work, &cfg)).map_err(runtime_err)?;
    let kernels: Vec<Arc<kernelir::Kernel>> = r.kernels.into_iter().map(Arc::new).collect();
    let sim = Py::new(py, PySim::from(r.simulated[r.winner].clone()))?;
    let ranked = r
        .ranked
        .into_iter()
        .map(|s| Py::new(py, PyCandidate { kernel: kernels[s.kernel].clone(), cand: s.cand, est: s.est }))
        .collect::<PyResult<_>>()?;
    Ok(PyCompile { ranked, winner: r.winner, sim })
}

/// Model cycles for a candidate, recomputed on `hw`.
#[pyfunction]
fn estimate(hw: &PyHardware, candidate: &PyCandidate) -> PyResult<u64> {
    perfmodel::estimate(&candidate.kernel, &hw.hw, &candidate.cand).map(|e| e.total_cycles).map_err(runtime_err)
}

#[pyfunction]
fn simulate(py: Python<'_>, hw: &PyHardware, candidate: &PyCandidate) -> PyResult<PySim> {
    candidate.simulate(py, hw)
}

/// Cycles of `iters` pipelined iterations with load, compute, store phases.
#[pyfunction]
fn loop_time(iters: u64, load: u64, compute: u64, store: u64) -> PyResult<u64> {
    perfmodel::loop_time(iters, load, compute, store).map_err(value_err)
}

#[pymodule]
fn dfplan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHardware>()?;
    m.add_class::<PyKernel>()?;
    m.add_class::<PyCandidate>()?;
    m.add_class::<PyCompile>()?;
    m.add_class::<PySim>()?;
    m.add_function(wrap_pyfunction!(parse_hardware, m)?)?;
    m.add_function(wrap_pyfunction!(sample_hardware, m)?)?;
    m.add_function(wrap_pyfunction!(parse_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(gemm, m)?)?;
    m.add_function(wrap_pyfunction!(compile, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(loop_time, m)?)?;
    Ok(())
}
