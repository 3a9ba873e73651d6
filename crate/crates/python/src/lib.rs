//! Python bindings for the `gfnash` crate.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gfnash::game::{self, ActionSet};
use gfnash::graph::{self, BALANCE_MAX_SWEEPS, BALANCE_TOL, DEFAULT_MARGIN, SPECTRAL_MAX_ITERS, SPECTRAL_TOL};
use gfnash::harness::{self, ExperimentResult};
use gfnash::oracle;
use gfnash::seeker;
use gfnash::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Csv(_) | Error::NumericOverflow(_) | Error::EvaluationFailure { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<graph::WeightMatrix> {
    graph::WeightMatrix::from_rows(rows).map_err(py_err)
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Directed graph with self-loops; nodes are 0-based here.
#[pyclass(name = "DiGraph", module = "gfnash", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDiGraph {
    inner: graph::DiGraph,
}

#[pymethods]
impl PyDiGraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self {
            inner: graph::DiGraph::new(n, edges).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn ring(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: graph::DiGraph::ring(n).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn complete(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: graph::DiGraph::complete(n).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn two_successor_cycle(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: graph::DiGraph::two_successor_cycle(n).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn ring_with_chords(n: usize, chords: usize) -> PyResult<Self> {
        Ok(Self {
            inner: graph::DiGraph::ring_with_chords(n, chords).map_err(py_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn is_strongly_connected(&self) -> bool {
        self.inner.is_strongly_connected()
    }

    fn __repr__(&self) -> String {
        format!("DiGraph(n={}, edges={})", self.inner.n(), self.inner.edge_count())
    }
}

/// Doubly-stochastic weights on the graph's support, as a list of rows.
#[pyfunction]
#[pyo3(signature = (g, max_iters = BALANCE_MAX_SWEEPS, tol = BALANCE_TOL))]
fn balance_weights(g: &PyDiGraph, max_iters: usize, tol: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(graph::balance_weights(&g.inner, max_iters, tol).map_err(py_err)?.to_rows())
}

/// `None` when doubly stochastic within `tol`, otherwise the violation text.
#[pyfunction]
#[pyo3(signature = (w, tol = BALANCE_TOL))]
fn doubly_stochastic_violation(w: Vec<Vec<f64>>, tol: f64) -> PyResult<Option<String>> {
    Ok(graph::validate_doubly_stochastic(&matrix(&w)?, tol).err().map(|e| e.to_string()))
}

/// `None` when `0 <= delta_l w_lj < 2 w_ll` everywhere, otherwise the violation text.
#[pyfunction]
fn delta_violation(w: Vec<Vec<f64>>, deltas: Vec<f64>) -> PyResult<Option<String>> {
    Ok(graph::validate_deltas(&matrix(&w)?, &deltas).err().map(|e| e.to_string()))
}

#[pyfunction]
fn tilde_matrix(w: Vec<Vec<f64>>, player: usize, deltas: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&graph::tilde_matrix(&matrix(&w)?, player, &deltas).map_err(py_err)?))
}

#[pyfunction]
fn spectral_radius(m: Vec<Vec<f64>>) -> PyResult<f64> {
    let w = matrix(&m)?;
    graph::spectral_radius(w.matrix(), SPECTRAL_MAX_ITERS, SPECTRAL_TOL).map_err(py_err)
}

/// `(rho, gamma)` per player.
#[pyfunction]
#[pyo3(signature = (w, deltas, margin = DEFAULT_MARGIN))]
fn certificates(w: Vec<Vec<f64>>, deltas: Vec<f64>, margin: f64) -> PyResult<Vec<(f64, f64)>> {
    Ok(graph::certify_all(&matrix(&w)?, &deltas, margin)
        .map_err(py_err)?
        .into_iter()
        .map(|c| (c.rho, c.gamma))
        .collect())
}

/// `f_i(x) = a_i (x_i - xr_i)^2 + (b sum(x) + c) x_i` on a common box `[lo, hi]`.
#[pyclass(name = "QuadraticGame", module = "gfnash", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyQuadraticGame {
    inner: game::QuadraticGame,
    lo: f64,
    hi: f64,
}

impl PyQuadraticGame {
    fn sets(&self) -> PyResult<Vec<ActionSet>> {
        Ok(vec![ActionSet::new(self.lo, self.hi).map_err(py_err)?; self.inner.n()])
    }

    fn check_point(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.n() {
            return Err(py_err(Error::DimensionMismatch {
                expected: self.inner.n(),
                got: x.len(),
            }));
        }
        Ok(())
    }
}

#[pymethods]
impl PyQuadraticGame {
    #[new]
    #[pyo3(signature = (a, b, c, xr, lo = 0.0, hi = 50.0))]
    fn new(a: Vec<f64>, b: f64, c: f64, xr: Vec<f64>, lo: f64, hi: f64) -> PyResult<Self> {
        ActionSet::new(lo, hi).map_err(py_err)?;
        Ok(Self {
            inner: game::QuadraticGame::new(a, b, c, xr).map_err(py_err)?,
            lo,
            hi,
        })
    }

    /// Five-player HVAC instance on `[0, 50]`.
    #[staticmethod]
    fn hvac() -> Self {
        Self {
            inner: game::QuadraticGame::hvac(),
            lo: 0.0,
            hi: 50.0,
        }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn cost(&self, i: usize, x: Vec<f64>) -> PyResult<f64> {
        self.check_point(&x)?;
        Ok(self.inner.cost(i, &x))
    }

    fn partial(&self, i: usize, x: Vec<f64>) -> PyResult<f64> {
        self.check_point(&x)?;
        Ok(self.inner.partial(i, &x))
    }

    fn solve_ne(&self) -> PyResult<Vec<f64>> {
        game::solve_quadratic_ne(&self.inner, &self.sets()?).map_err(py_err)
    }

    fn monotonicity_constant(&self) -> PyResult<f64> {
        game::monotonicity_constant(&self.inner).map_err(py_err)
    }

    /// Dict with `d1`, `d2`, `bbound`, `chi`, `lhat` at smoothing value `mu`.
    fn derived_constants<'py>(&self, py: Python<'py>, mu: f64) -> PyResult<Bound<'py, PyDict>> {
        let k = self.inner.derived_constants(&self.sets()?, mu).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("d1", k.d1)?;
        d.set_item("d2", k.d2)?;
        d.set_item("bbound", k.bbound)?;
        d.set_item("chi", k.chi)?;
        d.set_item("lhat", k.lhat)?;
        Ok(d)
    }

    /// Two-point oracle for player `i` at `y` with direction `xi`.
    fn oracle(&self, i: usize, y: Vec<f64>, mu: f64, xi: f64) -> PyResult<f64> {
        self.check_point(&y)?;
        let spec = self.inner.to_spec(self.sets()?).map_err(py_err)?;
        oracle::gf_oracle(&spec, i, &y, mu, xi).map_err(py_err)
    }

    /// `(mean, stderr)` of the oracle at `x` over `samples` draws.
    #[pyo3(signature = (i, x, mu, samples, seed = 0))]
    fn estimate_smoothed_grad(&self, i: usize, x: Vec<f64>, mu: f64, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
        self.check_point(&x)?;
        let spec = self.inner.to_spec(self.sets()?).map_err(py_err)?;
        let mut rng = oracle::RandomSource::new(seed, i as u64);
        let e = oracle::estimate_smoothed_grad(&spec, i, &x, mu, samples, &mut rng).map_err(py_err)?;
        Ok((e.mean, e.stderr))
    }

    fn __repr__(&self) -> String {
        format!(
            "QuadraticGame(n={}, b={}, c={}, box=[{}, {}])",
            self.inner.n(),
            self.inner.b,
            self.inner.c,
            self.lo,
            self.hi
        )
    }
}

#[pyfunction]
fn relative_error(x: Vec<f64>, xstar: Vec<f64>) -> PyResult<f64> {
    harness::relative_error(&x, &xstar).map_err(py_err)
}

/// Open intervals `(lo, hi)` of admissible constant step sizes.
#[pyfunction]
fn admissible_alpha(chi: f64, lhat: f64, bbound: f64, gamma: f64, n: usize, c: f64) -> PyResult<Vec<(f64, f64)>> {
    let cert = graph::SpectralCertificate::new(0, gamma, 0.0);
    Ok(seeker::admissible_alpha(chi, lhat, bbound, &cert, n, c)
        .map_err(py_err)?
        .into_iter()
        .map(|i| (i.lo, i.hi))
        .collect())
}

fn result_dict<'py>(py: Python<'py>, res: &ExperimentResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("xstar", res.xstar.clone())?;
    d.set_item("k", res.summary.iter().map(|r| r.k).collect::<Vec<_>>())?;
    d.set_item("rel_err_mean", res.summary.iter().map(|r| r.rel_err_mean).collect::<Vec<_>>())?;
    d.set_item("rel_err_min", res.summary.iter().map(|r| r.rel_err_min).collect::<Vec<_>>())?;
    d.set_item("rel_err_max", res.summary.iter().map(|r| r.rel_err_max).collect::<Vec<_>>())?;
    d.set_item("cons_mean", res.summary.iter().map(|r| r.cons_mean).collect::<Vec<_>>())?;
    d.set_item("cons_min", res.summary.iter().map(|r| r.cons_min).collect::<Vec<_>>())?;
    d.set_item("cons_max", res.summary.iter().map(|r| r.cons_max).collect::<Vec<_>>())?;
    let finals: Vec<Vec<f64>> = res.records.iter().map(|r| r.final_state.x.clone()).collect();
    d.set_item("final_x", finals)?;
    d.set_item("seeds", res.records.iter().map(|r| r.seed).collect::<Vec<_>>())?;
    Ok(d)
}

/// Runs the experiment described by a TOML document. Returns the seed-aggregated
/// summary as a dict of lists; with `out`, also writes the CSV artifacts.
#[pyfunction]
#[pyo3(signature = (config, overrides = Vec::new(), out = None))]
fn run_document<'py>(
    py: Python<'py>,
    config: PathBuf,
    overrides: Vec<String>,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let doc = gfnash::cli::load(&config, &overrides).map_err(py_err)?;
    let spec = doc.experiment_spec().map_err(py_err)?;
    let res = py
        .detach(|| harness::run_experiment(&spec, out.as_deref()))
        .map_err(py_err)?;
    result_dict(py, &res)
}

/// The five-player HVAC study on a builtin topology (`ring`, `ring-chords:K`,
/// `two-successor-cycle`, `complete`).
#[pyfunction]
#[pyo3(signature = (topology = "ring", iters = 1000, seeds = vec![1], mode = "gradient-free", alpha0 = 0.1, exponent = 0.5, constant_step = false))]
#[allow(clippy::too_many_arguments)]
fn run_hvac<'py>(
    py: Python<'py>,
    topology: &str,
    iters: usize,
    seeds: Vec<u64>,
    mode: &str,
    alpha0: f64,
    exponent: f64,
    constant_step: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let topology: harness::Topology = topology.parse().map_err(py_err)?;
    let mut spec = harness::ExperimentSpec::hvac(topology, iters, seeds);
    spec.algo.mode = mode.parse().map_err(py_err)?;
    spec.algo.schedule = if constant_step {
        seeker::StepSchedule::constant(alpha0)
    } else {
        seeker::StepSchedule::diminishing(alpha0, exponent)
    };
    let res = py.detach(|| harness::run_experiment(&spec, None)).map_err(py_err)?;
    result_dict(py, &res)
}

#[pymodule]
#[pyo3(name = "gfnash")]
fn gfnash_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDiGraph>()?;
    m.add_class::<PyQuadraticGame>()?;
    m.add_function(wrap_pyfunction!(balance_weights, m)?)?;
    m.add_function(wrap_pyfunction!(doubly_stochastic_violation, m)?)?;
    m.add_function(wrap_pyfunction!(delta_violation, m)?)?;
    m.add_function(wrap_pyfunction!(tilde_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_radius, m)?)?;
    m.add_function(wrap_pyfunction!(certificates, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(admissible_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(run_document, m)?)?;
    m.add_function(wrap_pyfunction!(run_hvac, m)?)?;
    Ok(())
}
