//! Python surface for the joint-spectral-radius toolkit.
//!
//! The bindings stay thin: matrix sets cross the boundary as nested lists or
//! JSON text, reports come back as plain dicts mirroring the on-disk report
//! fields, and every entry point is deterministic for a fixed seed.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use sparsejsr::driver::{self, BoundOpts, BoundReport};
use sparsejsr::matio;
use sparsejsr::spectral::{self, LowerOpts};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn dense_from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(PyValueError::new_err("matrix has no rows"));
    }
    for r in rows {
        if r.len() != n {
            return Err(PyValueError::new_err(format!(
                "matrix must be square, got a row of length {} in an {n}-row matrix",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows_from_dense(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

/// A finite set of square matrices, the object every bound is computed for.
#[pyclass(name = "MatrixSet", module = "sparsejsr_py", skip_from_py_object)]
struct PyMatrixSet {
    inner: matio::MatrixSet,
}

#[pymethods]
impl PyMatrixSet {
    /// Parse the matrix-set JSON format (sparse triplet entries).
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyMatrixSet {
            inner: matio::MatrixSet::from_json(text).map_err(value_err)?,
        })
    }

    /// Build from dense row-major nested lists, one per matrix.
    #[staticmethod]
    fn from_dense(matrices: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        let mats: Vec<DMatrix<f64>> = matrices
            .iter()
            .map(|m| dense_from_rows(m))
            .collect::<PyResult<_>>()?;
        Ok(PyMatrixSet {
            inner: matio::MatrixSet::from_dense(&mats).map_err(value_err)?,
        })
    }

    /// Seeded random set: each matrix gets `edges` off-diagonal entries
    /// uniform in [-1, 1]; the draw is identical across platforms.
    #[staticmethod]
    #[pyo3(signature = (n, m, edges, seed=1))]
    fn random_sparse(n: usize, m: usize, edges: usize, seed: u64) -> PyResult<Self> {
        Ok(PyMatrixSet {
            inner: matio::random_sparse_set(n, m, edges, seed).map_err(value_err)?,
        })
    }

    /// Seeded control benchmark: hold/act products of a stabilized loop.
    #[staticmethod]
    #[pyo3(signature = (n_plant, m, seed=1))]
    fn control(n_plant: usize, m: usize, seed: u64) -> PyResult<Self> {
        Ok(PyMatrixSet {
            inner: matio::control_set(n_plant, m, seed).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(value_err)
    }

    /// Matrix `i` as dense row-major nested lists.
    fn dense(&self, i: usize) -> PyResult<Vec<Vec<f64>>> {
        if i >= self.inner.m() {
            return Err(PyIndexError::new_err(format!(
                "matrix index {i} out of range for a set of {}",
                self.inner.m()
            )));
        }
        Ok(rows_from_dense(&self.inner.dense(i)))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn __len__(&self) -> usize {
        self.inner.m()
    }

    fn __repr__(&self) -> String {
        format!("MatrixSet(n={}, m={})", self.inner.n, self.inner.m())
    }
}

fn report_dict<'py>(py: Python<'py>, r: &BoundReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mode", r.mode.as_str())?;
    d.set_item("d", r.d)?;
    d.set_item("s", r.s)?;
    d.set_item("lb", r.lb)?;
    d.set_item("ub", r.ub)?;
    d.set_item("mb", r.mb)?;
    d.set_item("n", r.n)?;
    d.set_item("m", r.m)?;
    d.set_item("tol", r.tol)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("time_s", r.time_s)?;
    d.set_item("status", r.status.as_str())?;
    d.set_item("gamma_interval_final", r.gamma_interval_final)?;
    let steps = PyList::empty(py);
    for (g, st) in &r.per_step_status {
        steps.append((*g, st.as_str()))?;
    }
    d.set_item("per_step_status", steps)?;
    d.set_item("fallback_used", r.fallback_used)?;
    d.set_item("stabilized", r.stabilized)?;
    d.set_item("box_hit", r.box_hit)?;
    Ok(d)
}

fn opts_for(tol: f64, with_lower: bool, lower_maxlen: usize, newton: bool, timing: bool) -> BoundOpts {
    BoundOpts {
        tol,
        with_lower,
        lower_maxlen,
        newton,
        timing,
        ..BoundOpts::default()
    }
}

/// Spectral radius of one dense matrix.
#[pyfunction]
fn spectral_radius(matrix: Vec<Vec<f64>>) -> PyResult<f64> {
    let a = dense_from_rows(&matrix)?;
    spectral::spectral_radius(&a).map_err(value_err)
}

/// Product-enumeration lower bound on the joint spectral radius.
#[pyfunction]
#[pyo3(signature = (set, max_length=6, budget=1<<20))]
fn lower_bound<'py>(
    py: Python<'py>,
    set: &PyMatrixSet,
    max_length: usize,
    budget: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let rep = spectral::product_lower_bound(
        &set.inner.dense_all(),
        &LowerOpts { max_length, budget },
    )
    .map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("value", rep.value)?;
    d.set_item("witness_word", rep.witness_word)?;
    d.set_item("max_length", rep.max_length)?;
    d.set_item("truncated", rep.truncated)?;
    Ok(d)
}

/// Certified upper bound (optionally with a lower bound) for one relaxation.
///
/// `mode` is "dense", "support-restricted", or "sparse"; `s` is the sparsity
/// hierarchy level and is ignored in dense mode. The result dict mirrors the
/// report JSON written by the command line tool, plus the per-step verdicts.
#[pyfunction]
#[pyo3(signature = (set, mode="sparse", d=1, s=1, tol=1e-5, with_lower=true,
                    lower_maxlen=6, newton=false, timing=false))]
#[allow(clippy::too_many_arguments)]
fn bound<'py>(
    py: Python<'py>,
    set: &PyMatrixSet,
    mode: &str,
    d: u32,
    s: u32,
    tol: f64,
    with_lower: bool,
    lower_maxlen: usize,
    newton: bool,
    timing: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = opts_for(tol, with_lower, lower_maxlen, newton, timing);
    let rep = match mode {
        "dense" => driver::dense_bound(&set.inner, d, &opts),
        "support-restricted" => driver::support_restricted_bound(&set.inner, d, s, &opts),
        "sparse" => driver::sparse_bound(&set.inner, d, s, &opts),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown mode {other:?}; expected dense, support-restricted, or sparse"
            )))
        }
    }
    .map_err(value_err)?;
    report_dict(py, &rep)
}

/// Sparse bounds for s = 1..s_max, stopping once the hierarchy stabilizes.
/// Returns one report dict per computed level.
#[pyfunction]
#[pyo3(signature = (set, d=1, s_max=2, tol=1e-5, with_lower=true,
                    lower_maxlen=6, newton=false, timing=false))]
#[allow(clippy::too_many_arguments)]
fn jsr_sequence<'py>(
    py: Python<'py>,
    set: &PyMatrixSet,
    d: u32,
    s_max: u32,
    tol: f64,
    with_lower: bool,
    lower_maxlen: usize,
    newton: bool,
    timing: bool,
) -> PyResult<Bound<'py, PyList>> {
    let opts = opts_for(tol, with_lower, lower_maxlen, newton, timing);
    let reps = driver::sparsejsr(&set.inner, d, s_max, &opts).map_err(value_err)?;
    let out = PyList::empty(py);
    for r in &reps {
        out.append(report_dict(py, r)?)?;
    }
    Ok(out)
}

#[pymodule]
fn sparsejsr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMatrixSet>()?;
    m.add_function(wrap_pyfunction!(spectral_radius, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(bound, m)?)?;
    m.add_function(wrap_pyfunction!(jsr_sequence, m)?)?;
    Ok(())
}
