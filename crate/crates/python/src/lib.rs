//! Python bindings. Results come back as plain dicts, lists and tuples.

use ivkit_core::data::{write_csv, Column};
use ivkit_core::late::itt_effects;
use ivkit_core::montecarlo::{run_weak_iv_study_with, Execution};
use ivkit_core::{self as core, IntervalSet, IvError};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(ivkit, IvkitError, PyValueError);

fn err(e: IvError) -> PyErr {
    IvkitError::new_err(format!("{} ({})", e, e.kind()))
}

/// Any serializable value as the equivalent Python object.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn pieces(set: &IntervalSet) -> Vec<(f64, f64)> {
    set.intervals().iter().map(|i| (i.lo, i.hi)).collect()
}

/// A list of floats becomes one column named `default`; a mapping keeps
/// its names and order.
fn columns(value: Option<&Bound<'_, PyAny>>, default: &str) -> PyResult<Vec<Column>> {
    let Some(value) = value else { return Ok(Vec::new()) };
    if value.is_none() {
        return Ok(Vec::new());
    }
    if let Ok(values) = value.extract::<Vec<f64>>() {
        return Ok(vec![(default.to_string(), values)]);
    }
    value.call_method0("items")?.try_iter()?.map(|item| item?.extract()).collect()
}

#[pyclass(name = "Dataset", module = "ivkit", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: core::Dataset,
}

#[pymethods]
impl PyDataset {
    /// `instruments` and `covariates` are either a list of floats or a
    /// `{name: values}` mapping.
    #[new]
    #[pyo3(signature = (y, x, instruments, covariates=None))]
    fn new(
        y: Vec<f64>,
        x: Vec<f64>,
        instruments: &Bound<'_, PyAny>,
        covariates: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Self> {
        let inner = core::Dataset::new(
            ("y".into(), y),
            ("x".into(), x),
            columns(Some(instruments), "z")?,
            columns(covariates, "w")?,
        )
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, outcome, treatment, instruments, covariates=Vec::new()))]
    fn from_csv(
        path: &str,
        outcome: &str,
        treatment: &str,
        instruments: Vec<String>,
        covariates: Vec<String>,
    ) -> PyResult<Self> {
        let z: Vec<&str> = instruments.iter().map(String::as_str).collect();
        let v: Vec<&str> = covariates.iter().map(String::as_str).collect();
        let roles = core::ColumnRoles::new(outcome, treatment, &z).with_covariates(&v);
        Ok(Self { inner: core::load_csv(path, &roles).map_err(err)? })
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|source| {
            err(IvError::Io {
                path: path.into(),
                source,
            })
        })?;
        write_csv(&self.inner, file).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn instrument_names(&self) -> Vec<String> {
        self.inner.instrument_names().to_vec()
    }

    #[getter]
    fn covariate_names(&self) -> Vec<String> {
        self.inner.covariate_names().to_vec()
    }

    #[getter]
    fn outcome(&self) -> Vec<f64> {
        self.inner.outcome().iter().copied().collect()
    }

    #[getter]
    fn treatment(&self) -> Vec<f64> {
        self.inner.treatment().iter().copied().collect()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, instruments={:?}, covariates={:?})",
            self.inner.n(),
            self.inner.instrument_names(),
            self.inner.covariate_names()
        )
    }
}

#[pyclass(name = "BinaryIVTable", module = "ivkit", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTable {
    inner: core::BinaryIVTable,
}

#[pymethods]
impl PyTable {
    /// Counts per arm, each ordered `(Y0 X0, Y1 X0, Y0 X1, Y1 X1)`.
    #[staticmethod]
    fn from_arms(z0: [u64; 4], z1: [u64; 4]) -> PyResult<Self> {
        Ok(Self { inner: core::BinaryIVTable::from_arms(z0, z1).map_err(err)? })
    }

    /// The bundled influenza-vaccine encouragement table.
    #[staticmethod]
    fn flu() -> Self {
        Self { inner: core::flu_table() }
    }

    #[staticmethod]
    fn from_dataset(d: &PyDataset) -> PyResult<Self> {
        Ok(Self { inner: core::table_from_dataset(&d.inner).map_err(err)? })
    }

    /// `counts[y][x][z]`.
    #[getter]
    fn counts(&self) -> [[[u64; 2]; 2]; 2] {
        *self.inner.counts()
    }

    #[getter]
    fn total(&self) -> u64 {
        self.inner.total()
    }

    fn expand(&self) -> PyDataset {
        PyDataset { inner: self.inner.expand() }
    }

    fn __repr__(&self) -> String {
        format!("BinaryIVTable(counts={:?})", self.inner.counts())
    }
}

#[pyclass(name = "MarketParams", module = "ivkit", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyMarketParams {
    alpha_d: f64,
    beta_d: f64,
    alpha_s: f64,
    beta_s: f64,
    gamma_s: f64,
    sigma_d: f64,
    sigma_s: f64,
    rho: f64,
}

impl PyMarketParams {
    fn core(&self) -> PyResult<core::MarketParams> {
        let p = core::MarketParams {
            alpha_d: self.alpha_d,
            beta_d: self.beta_d,
            alpha_s: self.alpha_s,
            beta_s: self.beta_s,
            gamma_s: self.gamma_s,
            sigma_d: self.sigma_d,
            sigma_s: self.sigma_s,
            rho: self.rho,
        };
        p.validate().map_err(err)?;
        Ok(p)
    }
}

#[pymethods]
impl PyMarketParams {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let d = core::MarketParams::default();
        let mut p = Self {
            alpha_d: d.alpha_d,
            beta_d: d.beta_d,
            alpha_s: d.alpha_s,
            beta_s: d.beta_s,
            gamma_s: d.gamma_s,
            sigma_d: d.sigma_d,
            sigma_s: d.sigma_s,
            rho: d.rho,
        };
        if let Some(kwargs) = kwargs {
            for (key, value) in kwargs.iter() {
                let key: String = key.extract()?;
                let value: f64 = value.extract()?;
                match key.as_str() {
                    "alpha_d" => p.alpha_d = value,
                    "beta_d" => p.beta_d = value,
                    "alpha_s" => p.alpha_s = value,
                    "beta_s" => p.beta_s = value,
                    "gamma_s" => p.gamma_s = value,
                    "sigma_d" => p.sigma_d = value,
                    "sigma_s" => p.sigma_s = value,
                    "rho" => p.rho = value,
                    other => return Err(PyValueError::new_err(format!("unknown parameter `{other}`"))),
                }
            }
        }
        p.core()?;
        Ok(p)
    }

    /// `(d ln Q / dZ, d ln P / dZ)` in the reduced forms.
    fn reduced_form_slopes(&self) -> PyResult<(f64, f64)> {
        Ok(self.core()?.reduced_form_slopes())
    }

    fn __repr__(&self) -> String {
        format!(
            "MarketParams(alpha_d={}, beta_d={}, alpha_s={}, beta_s={}, gamma_s={}, sigma_d={}, sigma_s={}, rho={})",
            self.alpha_d, self.beta_d, self.alpha_s, self.beta_s, self.gamma_s, self.sigma_d, self.sigma_s, self.rho
        )
    }
}

/// Point estimate, standard errors and metadata for `method` in
/// `iv`, `ils`, `tsls`, `liml`.
#[pyfunction]
#[pyo3(signature = (d, method="tsls"))]
fn estimate<'py>(py: Python<'py>, d: &PyDataset, method: &str) -> PyResult<Bound<'py, PyAny>> {
    let fit = match method {
        "iv" => core::iv_ratio(&d.inner),
        "ils" => core::ils(&d.inner),
        "tsls" => core::tsls(&d.inner),
        "liml" => core::liml(&d.inner),
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    }
    .map_err(err)?;
    to_py(py, &fit)
}

#[pyfunction]
fn per_instrument_estimates<'py>(py: Python<'py>, d: &PyDataset) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &core::per_instrument_estimates(&d.inner).map_err(err)?)
}

#[pyfunction]
fn ar_statistic(d: &PyDataset, b: f64) -> PyResult<f64> {
    core::ar_statistic(&d.inner, b).map_err(err)
}

/// `{b : AR(b) ≤ critical_value}` as a list of `(lo, hi)` pairs; rays use
/// infinite endpoints.
#[pyfunction]
#[pyo3(signature = (d, critical_value=None))]
fn ar_confidence_set(d: &PyDataset, critical_value: Option<f64>) -> PyResult<Vec<(f64, f64)>> {
    Ok(pieces(&core::ar_confidence_set(&d.inner, critical_value).map_err(err)?))
}

#[pyfunction]
fn compliance_shares<'py>(py: Python<'py>, t: &PyTable) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &core::compliance_shares(&t.inner))
}

#[pyfunction(name = "itt_effects")]
fn py_itt_effects<'py>(py: Python<'py>, t: &PyTable) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &itt_effects(&t.inner))
}

#[pyfunction]
fn late<'py>(py: Python<'py>, t: &PyTable) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &core::late(&t.inner).map_err(err)?)
}

#[pyfunction]
fn natural_bounds(t: &PyTable) -> PyResult<(f64, f64)> {
    let set = core::natural_bounds(&t.inner).map_err(err)?;
    let i = set.intervals()[0];
    Ok((i.lo, i.hi))
}

#[pyfunction]
fn exclusion_tests<'py>(py: Python<'py>, t: &PyTable) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &core::exclusion_tests(&t.inner).restrictions)
}

#[pyfunction]
fn equilibrium<'py>(
    py: Python<'py>,
    p: &PyMarketParams,
    eps_d: f64,
    eps_s: f64,
    z: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &core::equilibrium(&p.core()?, eps_d, eps_s, z))
}

#[pyfunction]
fn working_slope(p: &PyMarketParams) -> PyResult<f64> {
    core::working_slope(&p.core()?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (p, r, eps_d=0.0, eps_s=0.0))]
fn tax_counterfactual<'py>(
    py: Python<'py>,
    p: &PyMarketParams,
    r: f64,
    eps_d: f64,
    eps_s: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &core::tax_counterfactual(&p.core()?, r, eps_d, eps_s).map_err(err)?)
}

/// `law`: `fish`, `fish-weather`, `normal`, `bernoulli:Q` or
/// `weather:MIXED:STORMY`.
#[pyfunction]
#[pyo3(signature = (p, n, law="fish", seed=0))]
fn simulate_markets(p: &PyMarketParams, n: usize, law: &str, seed: u64) -> PyResult<PyDataset> {
    let law = core::InstrumentLaw::parse(law).map_err(err)?;
    Ok(PyDataset { inner: core::simulate_markets(&p.core()?, n, &law, seed).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (
    n=500,
    k_instruments=1,
    beta1_true=1.0,
    instrument_strength=0.5,
    endogeneity=0.5,
    replications=1000,
    master_seed=0,
    keep_replications=false,
    serial=false,
))]
#[allow(clippy::too_many_arguments)]
fn run_weak_iv_study<'py>(
    py: Python<'py>,
    n: usize,
    k_instruments: usize,
    beta1_true: f64,
    instrument_strength: f64,
    endogeneity: f64,
    replications: usize,
    master_seed: u64,
    keep_replications: bool,
    serial: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = core::McConfig {
        n,
        k_instruments,
        beta1_true,
        instrument_strength,
        endogeneity,
        replications,
        master_seed,
        keep_replications,
    };
    let exec = if serial { Execution::Serial } else { Execution::Parallel };
    let report = py.detach(|| run_weak_iv_study_with(&cfg, exec)).map_err(err)?;
    to_py(py, &report)
}

/// Published figures recomputed from the bundled data.
#[pyfunction]
fn reproduce<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &core::cli::reproduce::reproduce_rows().map_err(err)?)
}

#[pymodule]
fn ivkit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("IvkitError", m.py().get_type::<IvkitError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyTable>()?;
    m.add_class::<PyMarketParams>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(per_instrument_estimates, m)?)?;
    m.add_function(wrap_pyfunction!(ar_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(ar_confidence_set, m)?)?;
    m.add_function(wrap_pyfunction!(compliance_shares, m)?)?;
    m.add_function(wrap_pyfunction!(py_itt_effects, m)?)?;
    m.add_function(wrap_pyfunction!(late, m)?)?;
    m.add_function(wrap_pyfunction!(natural_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(exclusion_tests, m)?)?;
    m.add_function(wrap_pyfunction!(equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(working_slope, m)?)?;
    m.add_function(wrap_pyfunction!(tax_counterfactual, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_markets, m)?)?;
    m.add_function(wrap_pyfunction!(run_weak_iv_study, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce, m)?)?;
    Ok(())
}
