//! Python bindings. Results that are plain records cross the boundary as dicts.

use debias::design::{ingest_csv, realize, Assignment, Covariates};
use debias::dgp::{generate, SchemeSpec};
use debias::estimators::{point_estimates, BiasConstants, ConstantName, EstimatorOptions};
use debias::randomization::{
    exact_distribution, monte_carlo_distribution, CiSpec, EngineConfig, EstimatorKind,
};
use debias::report::estimate_report;
use debias::variance::{DfMode, VarianceFlavor, VarianceOptions};
use debias::verify::{run_verify, VerifyOptions};
use debias::{AssignmentSpace, Error, ExperimentData, PotentialOutcomeTable};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Serializes through JSON so Python sees the same field names as the CLI output.
fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn parse_list<T: std::str::FromStr<Err = Error>>(items: &[String]) -> PyResult<Vec<T>> {
    items.iter().map(|s| s.parse().map_err(to_py)).collect()
}

fn engine_config(
    flavors: &[String],
    ci: &[String],
    threads: Option<usize>,
    skip_singular: bool,
) -> PyResult<EngineConfig> {
    let flavors: Vec<VarianceFlavor> = parse_list(flavors)?;
    let modes: Vec<DfMode> = parse_list(ci)?;
    Ok(EngineConfig {
        cis: CiSpec::grid(&flavors, &modes),
        threads,
        skip_singular,
        ..EngineConfig::default()
    })
}

/// One observed experiment: outcomes, treatment indicators and raw covariate rows.
#[pyclass(name = "Experiment", module = "debias_py", frozen)]
pub struct PyExperiment {
    inner: ExperimentData,
}

#[pymethods]
impl PyExperiment {
    #[new]
    fn new(y: Vec<f64>, t: Vec<bool>, z: Vec<Vec<f64>>) -> PyResult<Self> {
        let z = Covariates::from_rows(&z).map_err(to_py)?;
        Ok(Self {
            inner: ExperimentData::new(y, t, &z).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, y="y", t="t", z=None))]
    fn from_csv(path: &str, y: &str, t: &str, z: Option<Vec<String>>) -> PyResult<Self> {
        let z = z.unwrap_or_default();
        Ok(Self {
            inner: ingest_csv(path, y, t, &z).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn n_treated(&self) -> usize {
        self.inner.n_treated()
    }

    /// All five point estimates and both bias decompositions.
    fn point_estimates<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let est = point_estimates(&self.inner, EstimatorOptions::default()).map_err(to_py)?;
        to_dict(py, &est)
    }

    /// Full report: estimates, corrections, standard errors, df and intervals.
    #[pyo3(signature = (flavors=vec!["bc-hc2".to_string()], level=0.95))]
    fn report<'py>(
        &self,
        py: Python<'py>,
        flavors: Vec<String>,
        level: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let flavors: Vec<VarianceFlavor> = parse_list(&flavors)?;
        let opts = VarianceOptions {
            level,
            ..VarianceOptions::default()
        };
        let r = estimate_report(&self.inner, &flavors, EstimatorOptions::default(), &opts)
            .map_err(to_py)?;
        to_dict(py, &r)
    }

    fn __repr__(&self) -> String {
        format!(
            "Experiment(n={}, n_treated={}, k={})",
            self.inner.n(),
            self.inner.n_treated(),
            self.inner.k()
        )
    }
}

/// A finite population of potential outcomes `(a, b)` with covariate rows `z`.
#[pyclass(name = "Population", module = "debias_py", frozen)]
pub struct PyPopulation {
    inner: PotentialOutcomeTable,
}

#[pymethods]
impl PyPopulation {
    #[new]
    fn new(a: Vec<f64>, b: Vec<f64>, z: Vec<Vec<f64>>) -> PyResult<Self> {
        let z = Covariates::from_rows(&z).map_err(to_py)?;
        Ok(Self {
            inner: PotentialOutcomeTable::new(a, b, z).map_err(to_py)?,
        })
    }

    /// The simulation population for a scheme, variant and size.
    #[staticmethod]
    fn scheme(scheme: u8, variant: u8, n: usize) -> PyResult<Self> {
        let pop = generate(&SchemeSpec::new(scheme, variant, n).map_err(to_py)?).map_err(to_py)?;
        Ok(Self { inner: pop.table })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn true_ate(&self) -> f64 {
        self.inner.true_ate()
    }

    /// The experiment observed when the listed units are treated.
    fn observe(&self, treated: Vec<usize>) -> PyResult<PyExperiment> {
        let asn = Assignment::new(self.inner.n(), treated).map_err(to_py)?;
        Ok(PyExperiment {
            inner: realize(&self.inner, &asn).map_err(to_py)?,
        })
    }

    /// Exact randomization distribution over all assignments with `n_treated` treated.
    #[pyo3(signature = (
        n_treated,
        flavors=vec!["hc2".to_string(), "bc-hc2".to_string()],
        ci=vec!["t".to_string(), "satterthwaite".to_string()],
        threads=None,
        skip_singular=false,
    ))]
    fn exact<'py>(
        &self,
        py: Python<'py>,
        n_treated: usize,
        flavors: Vec<String>,
        ci: Vec<String>,
        threads: Option<usize>,
        skip_singular: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg = engine_config(&flavors, &ci, threads, skip_singular)?;
        let space = AssignmentSpace::new(self.inner.n(), n_treated).map_err(to_py)?;
        let table = &self.inner;
        let s = py
            .detach(|| exact_distribution(table, &space, &cfg))
            .map_err(to_py)?;
        to_dict(py, &s)
    }

    /// Randomization distribution estimated from `reps` seeded draws.
    #[pyo3(signature = (
        n_treated,
        reps,
        seed,
        flavors=vec!["hc2".to_string(), "bc-hc2".to_string()],
        ci=vec!["t".to_string(), "satterthwaite".to_string()],
        threads=None,
        skip_singular=false,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn monte_carlo<'py>(
        &self,
        py: Python<'py>,
        n_treated: usize,
        reps: u64,
        seed: u64,
        flavors: Vec<String>,
        ci: Vec<String>,
        threads: Option<usize>,
        skip_singular: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg = engine_config(&flavors, &ci, threads, skip_singular)?;
        let space = AssignmentSpace::new(self.inner.n(), n_treated).map_err(to_py)?;
        let table = &self.inner;
        let s = py
            .detach(|| monte_carlo_distribution(table, &space, seed, reps, &cfg))
            .map_err(to_py)?;
        to_dict(py, &s)
    }
}

/// All `C(n, n_treated)` assignments in lexicographic order.
#[pyclass(name = "AssignmentSpace", module = "debias_py", frozen)]
pub struct PyAssignmentSpace {
    inner: AssignmentSpace,
}

#[pymethods]
impl PyAssignmentSpace {
    #[new]
    fn new(n: usize, n_treated: usize) -> PyResult<Self> {
        Ok(Self {
            inner: AssignmentSpace::new(n, n_treated).map_err(to_py)?,
        })
    }

    /// Number of assignments, as an exact Python int.
    #[getter]
    fn total<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        py.import("builtins")?
            .getattr("int")?
            .call1((self.inner.total_big().to_string(),))
    }

    fn unrank(&self, index: u64) -> PyResult<Vec<usize>> {
        Ok(self.inner.unrank(index).map_err(to_py)?.treated().to_vec())
    }

    fn sample(&self, seed: u64, count: usize) -> PyResult<Vec<Vec<usize>>> {
        Ok(self
            .inner
            .sample(seed, count)
            .map_err(to_py)?
            .into_iter()
            .map(|a| a.treated().to_vec())
            .collect())
    }

    fn __len__(&self) -> PyResult<usize> {
        let total = self.inner.total().map_err(to_py)?;
        usize::try_from(total).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// The nine design constants of the bias estimators, keyed by name.
#[pyfunction]
fn bias_constants<'py>(
    py: Python<'py>,
    n: usize,
    n_treated: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let c = BiasConstants::new(n, n_treated).map_err(to_py)?;
    let d = PyDict::new(py);
    for name in ConstantName::ALL {
        d.set_item(name.label(), c.get(name))?;
    }
    Ok(d)
}

/// Generated population columns `i, x1, x2, v, h, y0, y1` as a dict of lists.
#[pyfunction]
fn dgp_table<'py>(
    py: Python<'py>,
    scheme: u8,
    variant: u8,
    n: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let pop = generate(&SchemeSpec::new(scheme, variant, n).map_err(to_py)?).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("i", (1..=n).collect::<Vec<_>>())?;
    d.set_item("x1", pop.table.z.column(0))?;
    d.set_item("x2", pop.table.z.column(1))?;
    d.set_item("v", pop.leverage.v.clone())?;
    d.set_item("h", pop.leverage.h.clone())?;
    d.set_item("y0", pop.table.b.clone())?;
    d.set_item("y1", pop.table.a.clone())?;
    Ok(d)
}

/// Runs the identity checks; returns `(passed, checks)`.
#[pyfunction]
#[pyo3(signature = (sizes=vec![8, 10, 12], tables_per_size=2, triples=20, seed=20240601))]
fn verify<'py>(
    py: Python<'py>,
    sizes: Vec<usize>,
    tables_per_size: usize,
    triples: usize,
    seed: u64,
) -> PyResult<(bool, Bound<'py, PyAny>)> {
    let opts = VerifyOptions {
        sizes,
        tables_per_size,
        triples,
        seed,
        inject: None,
    };
    let report = py.detach(|| run_verify(&opts)).map_err(to_py)?;
    Ok((report.passed(), to_dict(py, &report.checks)?))
}

/// Estimator labels in report order.
#[pyfunction]
fn estimators() -> Vec<&'static str> {
    EstimatorKind::ALL.iter().map(|e| e.label()).collect()
}

#[pymodule]
fn debias_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExperiment>()?;
    m.add_class::<PyPopulation>()?;
    m.add_class::<PyAssignmentSpace>()?;
    m.add_function(wrap_pyfunction!(bias_constants, m)?)?;
    m.add_function(wrap_pyfunction!(dgp_table, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(estimators, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
