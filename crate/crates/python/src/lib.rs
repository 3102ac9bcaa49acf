//! Python bindings: `pycocycle`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cocycle_lab::asymp::{detect_periodicity, PeriodicityOptions, PeriodicityOutcome};
use cocycle_lab::cli::{cycle_notation, evaluate, CheckStatus};
use cocycle_lab::cocycle::CocycleFamily;
use cocycle_lab::driving::{DrivingSystem, EnvPoint};
use cocycle_lab::exactness::exactness_report;
use cocycle_lab::measure::{Density, FiniteMeasureSpace, Observable, Representation, Space};
use cocycle_lab::mixing::{baker_counterexample, four_verdicts, MixingOptions};
use cocycle_lab::scenario;
use cocycle_lab::transfer::{pf_exact, pf_ulam, MapSpec};

fn err(e: cocycle_lab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn map_spec(name: &str, k: Option<u32>, value: Option<f64>) -> PyResult<MapSpec> {
    match name {
        "identity" => Ok(MapSpec::Identity),
        "doubling" => Ok(MapSpec::Doubling),
        "tent" => Ok(MapSpec::Tent),
        "baker_cyclic" => MapSpec::baker_cyclic(k.ok_or_else(|| PyValueError::new_err("baker_cyclic needs k"))?)
            .map_err(err),
        "constant" => Ok(MapSpec::Constant(
            value.ok_or_else(|| PyValueError::new_err("constant needs value"))?,
        )),
        other => Err(PyValueError::new_err(format!("unknown map {other:?}"))),
    }
}

fn space_of(n: usize, weights: Option<Vec<f64>>) -> PyResult<Space> {
    match weights {
        Some(w) => FiniteMeasureSpace::new(w).map_err(err),
        None => FiniteMeasureSpace::uniform(n).map_err(err),
    }
}

/// A Markov operator on a finite partition, as a row-stochastic mass kernel.
#[pyclass(name = "MarkovMatrix", module = "pycocycle", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMarkovMatrix {
    inner: cocycle_lab::measure::MarkovMatrix,
}

#[pymethods]
impl PyMarkovMatrix {
    /// Exact Perron-Frobenius kernel of a named map on `n` uniform cells.
    #[staticmethod]
    #[pyo3(signature = (map, n, k=None, value=None))]
    fn exact(map: &str, n: usize, k: Option<u32>, value: Option<f64>) -> PyResult<Self> {
        let s = space_of(n, None)?;
        Ok(PyMarkovMatrix {
            inner: pf_exact(&map_spec(map, k, value)?, &s).map_err(err)?,
        })
    }

    /// Monte-Carlo Ulam kernel with stratified samples per cell.
    #[staticmethod]
    #[pyo3(signature = (map, n, samples, seed, k=None, value=None))]
    fn ulam(map: &str, n: usize, samples: usize, seed: u64, k: Option<u32>, value: Option<f64>) -> PyResult<Self> {
        let s = space_of(n, None)?;
        Ok(PyMarkovMatrix {
            inner: pf_ulam(&map_spec(map, k, value)?, &s, samples, seed).map_err(err)?,
        })
    }

    /// Kernel from dense rows; `weights` default to uniform cells.
    #[staticmethod]
    #[pyo3(signature = (rows, weights=None))]
    fn from_rows(rows: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        let s = space_of(rows.len(), weights)?;
        Ok(PyMarkovMatrix {
            inner: cocycle_lab::measure::MarkovMatrix::from_dense(&s, &rows, Representation::Approximate)
                .map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.space().weights().to_vec()
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        self.inner.to_dense()
    }

    /// `P f` for cell values of a density.
    fn apply(&self, f: Vec<f64>) -> PyResult<Vec<f64>> {
        let d = Density::new(self.inner.space(), f).map_err(err)?;
        Ok(self.inner.apply(&d).map_err(err)?.values().to_vec())
    }

    /// `P* g` for cell values of an observable.
    fn dual_apply(&self, g: Vec<f64>) -> PyResult<Vec<f64>> {
        let o = Observable::new(self.inner.space(), g).map_err(err)?;
        Ok(self.inner.dual_apply(&o).map_err(err)?.values().to_vec())
    }

    fn power(&self, n: usize) -> Self {
        PyMarkovMatrix {
            inner: self.inner.power(n),
        }
    }

    /// `(passed, max_row_deviation, min_entry)`
    fn markov_check(&self) -> (bool, f64, f64) {
        let r = self.inner.markov_check();
        (r.passed, r.max_row_deviation, r.min_entry)
    }

    fn __repr__(&self) -> String {
        format!("MarkovMatrix(cells={}, nnz={})", self.inner.len(), self.inner.nnz())
    }
}

/// A Markov operator cocycle over a finite rotation (`q = 1` is constant).
#[pyclass(name = "Cocycle", module = "pycocycle", frozen)]
pub struct PyCocycle {
    inner: CocycleFamily,
}

#[pymethods]
impl PyCocycle {
    /// `table[i]` is the operator at point `i` of the rotation `i -> i + 1 mod q`.
    #[new]
    fn new(table: Vec<PyRef<'_, PyMarkovMatrix>>) -> PyResult<Self> {
        let ops: Vec<_> = table.iter().map(|m| m.inner.clone()).collect();
        let driving = DrivingSystem::rotation(ops.len(), 1).map_err(err)?;
        Ok(PyCocycle {
            inner: CocycleFamily::new(driving, ops).map_err(err)?,
        })
    }

    fn cells(&self) -> usize {
        self.inner.space().len()
    }

    /// `P⁽ⁿ⁾` at the environment point `omega`.
    fn compose(&self, omega: usize, n: usize) -> PyResult<PyMarkovMatrix> {
        self.check_point(omega)?;
        Ok(PyMarkovMatrix {
            inner: self.inner.compose(&EnvPoint::Finite(omega), n),
        })
    }

    /// The four mixing verdicts over every environment point.
    #[pyo3(signature = (horizon=40, tol=1e-6))]
    fn mixing<'py>(&self, py: Python<'py>, horizon: usize, tol: f64) -> PyResult<Bound<'py, PyDict>> {
        let reps = four_verdicts(&self.inner, &self.points(), &MixingOptions::new(horizon, tol)).map_err(err)?;
        let d = PyDict::new(py);
        for r in reps {
            d.set_item(r.notion.to_string(), r.decayed)?;
        }
        Ok(d)
    }

    #[pyo3(signature = (horizon=40, tol=1e-8))]
    fn exactness<'py>(&self, py: Python<'py>, horizon: usize, tol: f64) -> PyResult<Bound<'py, PyDict>> {
        let r = exactness_report(&self.inner, &self.points(), horizon, tol).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("exact", r.exact)?;
        d.set_item("lin_trivial", r.lin_trivial)?;
        d.set_item("tail_trivial", r.tail_trivial)?;
        d.set_item("agreement", r.agreement)?;
        Ok(d)
    }

    /// `None` when no decomposition with at most `r_max` components exists.
    #[pyo3(signature = (horizon=40, r_max=4))]
    fn periodicity<'py>(&self, py: Python<'py>, horizon: usize, r_max: usize) -> PyResult<Option<Bound<'py, PyDict>>> {
        let opts = PeriodicityOptions::new(self.inner.space().len(), horizon, r_max);
        match detect_periodicity(&self.inner, &self.points(), &opts).map_err(err)? {
            PeriodicityOutcome::Found(dec) => {
                let d = PyDict::new(py);
                d.set_item("r", dec.r)?;
                d.set_item("rho", dec.rho.iter().map(|r| cycle_notation(r)).collect::<Vec<_>>())?;
                d.set_item("residual", dec.residual)?;
                Ok(Some(d))
            }
            PeriodicityOutcome::NoneFound { .. } => Ok(None),
            PeriodicityOutcome::Indeterminate { omega_id, detail } => Err(PyValueError::new_err(format!(
                "indeterminate at omega {omega_id}: {detail}"
            ))),
        }
    }
}

impl PyCocycle {
    fn points(&self) -> Vec<EnvPoint> {
        (0..self.inner.driving().feature_count()).map(EnvPoint::Finite).collect()
    }

    fn check_point(&self, omega: usize) -> PyResult<()> {
        if omega >= self.inner.driving().feature_count() {
            return Err(PyValueError::new_err(format!("omega {omega} out of range")));
        }
        Ok(())
    }
}

/// A loaded scenario file.
#[pyclass(name = "Scenario", module = "pycocycle", frozen)]
pub struct PyScenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyScenario {
            inner: scenario::Scenario::load(path).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, name="scenario"))]
    fn parse(text: &str, name: &str) -> PyResult<Self> {
        Ok(PyScenario {
            inner: scenario::Scenario::parse(text, name).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn cells(&self) -> usize {
        self.inner.space.len()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.analysis.horizon
    }

    /// Verdicts and the consistency checks of the `report` command.
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let v = evaluate(&self.inner).map_err(err)?;
        let d = PyDict::new(py);
        let mixing = PyDict::new(py);
        for (n, m) in &v.mixing {
            mixing.set_item(n.to_string(), *m)?;
        }
        d.set_item("mixing", mixing)?;
        d.set_item("exact", v.exact)?;
        d.set_item("lin_trivial", v.lin_trivial)?;
        d.set_item("tail_trivial", v.tail_trivial)?;
        d.set_item("r", v.r)?;
        let checks = PyDict::new(py);
        for c in &v.checks {
            let status = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "fail",
                CheckStatus::Skipped => "skipped",
            };
            checks.set_item(c.name, status)?;
        }
        d.set_item("checks", checks)?;
        d.set_item("consistent", v.consistent())?;
        Ok(d)
    }
}

/// Rows `(n, inhomogeneous correlation, overlap measure)` of the cyclic
/// baker counterexample for `n = 0..=n_max`.
#[pyfunction]
#[pyo3(signature = (k=8, n_max=None))]
fn counterexample(k: usize, n_max: Option<usize>) -> PyResult<Vec<(usize, f64, f64)>> {
    let rep = baker_counterexample(k, n_max.unwrap_or(2 * k)).map_err(err)?;
    Ok(rep.rows.iter().map(|r| (r.n, r.inhom, r.overlap_measure)).collect())
}

/// Runs the command-line interface; returns the exit status.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    cocycle_lab::cli::run(std::iter::once("cocycle-lab".to_string()).chain(args))
}

#[pymodule]
fn pycocycle(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarkovMatrix>()?;
    m.add_class::<PyCocycle>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
