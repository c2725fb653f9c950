//! Python bindings: the `opmean` extension module.
//!
//! Matrices cross the boundary as `Matrix` objects or nested lists of floats.
//! Structured results (reports, bundles, summaries) come back as plain dicts.

use opmean::campaign::{self, CampaignConfig};
use opmean::checks::{self, CheckName, FalsifyConfig, Trace};
use opmean::hypgen::{self, HypothesisKind, HypothesisSpec};
use opmean::matcore;
use opmean::opmeans;
use opmean::scalar_means::{self as sm, ScalarPair, ScanMode};
use opmean::SymMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: opmean::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts any serializable value into the equivalent Python object.
fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A symmetric real matrix.
#[pyclass(name = "Matrix", module = "opmean", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMatrix {
    inner: SymMatrix,
}

#[pymethods]
impl PyMatrix {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self { inner: SymMatrix::from_rows(&rows).map_err(err)? })
    }

    #[staticmethod]
    fn diag(values: Vec<f64>) -> Self {
        Self { inner: SymMatrix::from_diagonal(&values) }
    }

    #[staticmethod]
    fn identity(n: usize) -> Self {
        Self { inner: SymMatrix::identity(n) }
    }

    /// Parses the matrix text format: `n`, then `n` rows of `n` numbers.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: SymMatrix::parse_text(text).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        self.inner.to_rows()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn eigenvalues(&self) -> PyResult<Vec<f64>> {
        self.inner.eigenvalues().map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Matrix({:?})", self.inner.to_rows())
    }
}

fn matrix(obj: &Bound<'_, PyAny>) -> PyResult<SymMatrix> {
    if let Ok(m) = obj.cast::<PyMatrix>() {
        return Ok(m.get().inner.clone());
    }
    let rows: Vec<Vec<f64>> = obj.extract()?;
    SymMatrix::from_rows(&rows).map_err(err)
}

fn wrap(inner: SymMatrix) -> PyMatrix {
    PyMatrix { inner }
}

fn pair(a: f64, b: f64) -> PyResult<ScalarPair> {
    ScalarPair::new(a, b).map_err(err)
}

#[pyfunction]
fn am(a: f64, b: f64) -> PyResult<f64> {
    Ok(sm::am(pair(a, b)?))
}

#[pyfunction]
fn gm(a: f64, b: f64) -> PyResult<f64> {
    Ok(sm::gm(pair(a, b)?))
}

#[pyfunction]
fn heinz(a: f64, b: f64, nu: f64) -> PyResult<f64> {
    sm::heinz(pair(a, b)?, nu).map_err(err)
}

#[pyfunction]
fn logmean(a: f64, b: f64) -> PyResult<f64> {
    Ok(sm::logmean(pair(a, b)?))
}

#[pyfunction]
fn r_log(x: f64) -> f64 {
    sm::r_log(x)
}

#[pyfunction]
fn r_rat(x: f64) -> f64 {
    sm::r_rat(x)
}

#[pyfunction]
fn r_m(m: f64) -> PyResult<f64> {
    sm::r_m(m).map_err(err)
}

#[pyfunction]
fn u_up(x: f64) -> f64 {
    sm::u_up(x)
}

/// Every mean in the scalar chain for the pair `(a, b)`.
#[pyfunction]
fn chain<'py>(py: Python<'py>, a: f64, b: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &sm::chain_eval(pair(a, b)?))
}

#[pyfunction]
#[pyo3(signature = (lo, hi, samples, mode = "log-grid"))]
fn scalar_scan<'py>(py: Python<'py>, lo: f64, hi: f64, samples: usize, mode: &str) -> PyResult<Bound<'py, PyAny>> {
    let mode: ScanMode = mode.parse().map_err(err)?;
    to_py(py, &sm::chain_scan(lo, hi, samples, mode).map_err(err)?)
}

#[pyfunction]
fn geo_mean(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>) -> PyResult<PyMatrix> {
    Ok(wrap(opmeans::geo_mean(&matrix(a)?, &matrix(b)?).map_err(err)?))
}

#[pyfunction]
fn refined_mid(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>) -> PyResult<PyMatrix> {
    Ok(wrap(opmeans::refined_mid(&matrix(a)?, &matrix(b)?).map_err(err)?))
}

#[pyfunction]
fn upper_bound(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>) -> PyResult<PyMatrix> {
    Ok(wrap(opmeans::upper_bound(&matrix(a)?, &matrix(b)?).map_err(err)?))
}

/// `geo`, `mid`, `upper`, `am` as matrices plus the identity gaps.
#[pyfunction]
fn mean_bundle<'py>(py: Python<'py>, a: &Bound<'py, PyAny>, b: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyDict>> {
    let bundle = opmeans::mean_bundle(&matrix(a)?, &matrix(b)?).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("geo", wrap(bundle.geo))?;
    d.set_item("mid", wrap(bundle.mid))?;
    d.set_item("upper", wrap(bundle.upper))?;
    d.set_item("am", wrap(bundle.am))?;
    d.set_item("mid_identity_gap", bundle.mid_identity_gap)?;
    d.set_item("upper_identity_gap", bundle.upper_identity_gap)?;
    d.set_item("widened", bundle.widened)?;
    Ok(d)
}

#[pyfunction]
fn riccati_residual(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>, x: &Bound<'_, PyAny>) -> PyResult<f64> {
    opmeans::riccati_residual(&matrix(a)?, &matrix(b)?, &matrix(x)?).map_err(err)
}

/// Ascending eigenvalues and the matching eigenvectors as columns.
#[pyfunction]
fn jacobi_eig(a: &Bound<'_, PyAny>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let e = matcore::jacobi_eig(&matrix(a)?).map_err(err)?;
    let n = e.n();
    let rows = (0..n).map(|i| (0..n).map(|j| e.vectors[(i, j)]).collect()).collect();
    Ok((e.values, rows))
}

#[pyfunction]
fn sqrt_pd(a: &Bound<'_, PyAny>) -> PyResult<PyMatrix> {
    Ok(wrap(matcore::sqrt_pd(&matrix(a)?).map_err(err)?))
}

/// `(holds, margin)` for `A <= B` in the Loewner order.
#[pyfunction]
#[pyo3(signature = (a, b, tol = 1e-8))]
fn loewner_leq(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>, tol: f64) -> PyResult<(bool, f64)> {
    let v = matcore::loewner_leq(&matrix(a)?, &matrix(b)?, tol).map_err(err)?;
    Ok((v.holds, v.margin))
}

#[pyfunction]
fn rand_spd(n: usize, lo: f64, hi: f64, seed: u64) -> PyResult<PyMatrix> {
    Ok(wrap(hypgen::rand_spd(n, lo, hi, seed).map_err(err)?))
}

fn parse_kind(kind: &str) -> PyResult<HypothesisKind> {
    [
        HypothesisKind::SpdPair,
        HypothesisKind::PairOrdered,
        HypothesisKind::KantorovichTriple,
        HypothesisKind::SelfInverse,
        HypothesisKind::MapLevel,
    ]
    .into_iter()
    .find(|k| k.as_str() == kind)
    .ok_or_else(|| PyValueError::new_err(format!("unknown hypothesis kind `{kind}`")))
}

#[pyfunction]
#[pyo3(signature = (kind, m, m_prime, big_m, n = 2, strengthened = false))]
fn feasibility<'py>(
    py: Python<'py>,
    kind: &str,
    m: f64,
    m_prime: f64,
    big_m: f64,
    n: usize,
    strengthened: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = HypothesisSpec::new(parse_kind(kind)?, n, m, m_prime, big_m, strengthened);
    to_py(py, &hypgen::feasibility(&spec))
}

#[pyfunction]
fn list_checks() -> Vec<&'static str> {
    CheckName::ALL.iter().map(|c| c.as_str()).collect()
}

fn check_name(name: &str) -> PyResult<CheckName> {
    name.parse().map_err(err)
}

/// Runs a campaign and returns its summary report.
#[pyfunction]
#[pyo3(signature = (checks, dims = vec![2, 3, 5], trials = 100, seed = 0, tol = None))]
fn run_campaign<'py>(
    py: Python<'py>,
    checks: Vec<String>,
    dims: Vec<usize>,
    trials: usize,
    seed: u64,
    tol: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let names = checks.iter().map(|c| check_name(c)).collect::<PyResult<Vec<_>>>()?;
    let mut cfg = CampaignConfig::new(names, dims, trials, seed);
    cfg.tol = tol;
    let (report, _) = py.detach(|| campaign::run(&cfg)).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (check, budget = 1000, n = 2, seed = 0))]
fn falsify<'py>(py: Python<'py>, check: &str, budget: usize, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = FalsifyConfig::new(check_name(check)?, budget, n, seed);
    let out = py.detach(|| checks::falsify(&cfg)).map_err(err)?;
    to_py(py, &out)
}

#[pyfunction]
#[pyo3(signature = (trace, tol = None))]
fn replay<'py>(py: Python<'py>, trace: &str, tol: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let trace: Trace = trace.parse().map_err(err)?;
    let tol = tol.unwrap_or_else(|| trace.check.default_tol());
    to_py(py, &checks::evaluate(&trace, tol).map_err(err)?)
}

#[pymodule]
#[pyo3(name = "opmean")]
fn opmean_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMatrix>()?;
    m.add_function(wrap_pyfunction!(am, m)?)?;
    m.add_function(wrap_pyfunction!(gm, m)?)?;
    m.add_function(wrap_pyfunction!(heinz, m)?)?;
    m.add_function(wrap_pyfunction!(logmean, m)?)?;
    m.add_function(wrap_pyfunction!(r_log, m)?)?;
    m.add_function(wrap_pyfunction!(r_rat, m)?)?;
    m.add_function(wrap_pyfunction!(r_m, m)?)?;
    m.add_function(wrap_pyfunction!(u_up, m)?)?;
    m.add_function(wrap_pyfunction!(chain, m)?)?;
    m.add_function(wrap_pyfunction!(scalar_scan, m)?)?;
    m.add_function(wrap_pyfunction!(geo_mean, m)?)?;
    m.add_function(wrap_pyfunction!(refined_mid, m)?)?;
    m.add_function(wrap_pyfunction!(upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(mean_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(riccati_residual, m)?)?;
    m.add_function(wrap_pyfunction!(jacobi_eig, m)?)?;
    m.add_function(wrap_pyfunction!(sqrt_pd, m)?)?;
    m.add_function(wrap_pyfunction!(loewner_leq, m)?)?;
    m.add_function(wrap_pyfunction!(rand_spd, m)?)?;
    m.add_function(wrap_pyfunction!(feasibility, m)?)?;
    m.add_function(wrap_pyfunction!(list_checks, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(falsify, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
