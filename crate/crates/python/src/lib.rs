//! Python bindings: scenario loading, validation, simulation, and the
//! centralized reference solve, mirroring the `edgeflow` CLI surface.

use nalgebra::DVector;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use edgeflow::constraints::DEFAULT_FEASIBILITY_TOL;
use edgeflow::harness;
use edgeflow::scenario;
use edgeflow::{Feasibility, Objective};

fn to_py_err(e: edgeflow::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A validated experiment description.
#[pyclass]
struct Scenario {
    inner: edgeflow::Scenario,
}

#[pymethods]
impl Scenario {
    /// Loads and validates a scenario JSON file.
    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: scenario::load_scenario(path).map_err(to_py_err)?,
        })
    }

    /// Parses a scenario from a JSON string without the semantic checks.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: scenario::parse_scenario_str(text).map_err(to_py_err)?,
        })
    }

    fn to_json(&self) -> String {
        scenario::scenario_to_json(&self.inner)
    }

    #[getter]
    fn agent_count(&self) -> usize {
        self.inner.graph.agent_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.graph.edge_count()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn mode(&self) -> &'static str {
        match self.inner.mode {
            harness::Mode::SaddlePoint => "saddle_point",
            harness::Mode::EdgeOnly => "edge_only",
        }
    }

    /// Replaces the random seed; errors when the initial state is explicit.
    fn with_seed(&self, seed: u64) -> PyResult<Self> {
        let init = match self.inner.init {
            harness::Init::UniformRandom { low, high, .. } => {
                harness::Init::UniformRandom { low, high, seed }
            }
            harness::Init::Explicit { .. } => {
                return Err(PyValueError::new_err(
                    "scenario uses an explicit initial state",
                ))
            }
        };
        Ok(Self {
            inner: edgeflow::Scenario {
                init,
                ..self.inner.clone()
            },
        })
    }

    /// Runs every validation check; returns (name, passed, detail) triples.
    fn check(&self) -> Vec<(String, bool, String)> {
        harness::validate(&self.inner)
            .checks
            .iter()
            .map(|c| (c.name.to_string(), c.passed, c.detail.clone()))
            .collect()
    }

    /// Simulates the scenario and returns the trajectory with metrics.
    fn run(&self) -> PyResult<RunResult> {
        let (trajectory, summary) = harness::run(&self.inner).map_err(to_py_err)?;
        Ok(RunResult {
            times: trajectory.times.clone(),
            states: trajectory
                .states
                .iter()
                .map(|s| s.x.iter().copied().collect())
                .collect(),
            multipliers: trajectory
                .states
                .iter()
                .map(|s| s.lambda.iter().copied().collect())
                .collect(),
            agreement_error: trajectory.agreement.clone(),
            distance_to_opt: trajectory.distance_to_opt.clone(),
            summary,
        })
    }

    /// Solves the problem centrally (exact KKT for quadratic-class
    /// objectives, method of multipliers otherwise).
    fn reference(&self) -> PyResult<ReferenceResult> {
        let sys = edgeflow::stack(&self.inner.graph, &self.inner.constraints, self.inner.n)
            .map_err(to_py_err)?;
        let all_quadratic = self.inner.objectives.iter().all(Objective::is_quadratic_class);
        let solution = if all_quadratic {
            edgeflow::solve_quadratic_kkt(&sys, &self.inner.objectives).map_err(to_py_err)?
        } else {
            let init = match sys.feasible_point(DEFAULT_FEASIBILITY_TOL) {
                Feasibility::Feasible(x) => x,
                Feasibility::Infeasible { .. } => {
                    DVector::zeros(self.inner.graph.agent_count() * self.inner.n)
                }
            };
            edgeflow::solve_general(&sys, &self.inner.objectives, &init).map_err(to_py_err)?
        };
        Ok(ReferenceResult {
            x_star: solution.x_star.iter().copied().collect(),
            mu_star: solution.mu_star.iter().copied().collect(),
            kkt_residual: solution.kkt_residual,
            objective_value: solution.objective_value,
        })
    }
}

/// Recorded trajectory and scalar summary of one simulation.
#[pyclass]
struct RunResult {
    #[pyo3(get)]
    times: Vec<f64>,
    #[pyo3(get)]
    states: Vec<Vec<f64>>,
    #[pyo3(get)]
    multipliers: Vec<Vec<f64>>,
    #[pyo3(get)]
    agreement_error: Vec<f64>,
    #[pyo3(get)]
    distance_to_opt: Option<Vec<f64>>,
    summary: harness::RunSummary,
}

#[pymethods]
impl RunResult {
    #[getter]
    fn final_v(&self) -> f64 {
        self.summary.final_v
    }

    #[getter]
    fn final_w(&self) -> Option<f64> {
        self.summary.final_w
    }

    #[getter]
    fn final_rhs_norm(&self) -> f64 {
        self.summary.final_rhs_norm
    }

    #[getter]
    fn fitted_rate(&self) -> Option<f64> {
        self.summary.fitted_rate
    }

    #[getter]
    fn fit_r_squared(&self) -> Option<f64> {
        self.summary.fit_r_squared
    }

    #[getter]
    fn locality_ok(&self) -> bool {
        self.summary.locality_ok
    }

    #[getter]
    fn wall_time(&self) -> f64 {
        self.summary.wall_time
    }

    #[getter]
    fn seed(&self) -> Option<u64> {
        self.summary.seed
    }

    #[getter]
    fn notes(&self) -> Vec<String> {
        self.summary.notes.clone()
    }
}

/// Centralized optimum with its verified KKT residual.
#[pyclass]
struct ReferenceResult {
    #[pyo3(get)]
    x_star: Vec<f64>,
    #[pyo3(get)]
    mu_star: Vec<f64>,
    #[pyo3(get)]
    kkt_residual: f64,
    #[pyo3(get)]
    objective_value: f64,
}

/// Log-linear decay-rate fit of a positive series; returns (rate, r_squared).
#[pyfunction]
fn fit_exponential_rate(times: Vec<f64>, series: Vec<f64>) -> PyResult<(f64, f64)> {
    if times.len() != series.len() {
        return Err(PyValueError::new_err("times and series lengths differ"));
    }
    harness::fit_exponential_rate(&times, &series, harness::RATE_FIT_WINDOW).map_err(to_py_err)
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[pymodule]
fn _edgeflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<RunResult>()?;
    m.add_class::<ReferenceResult>()?;
    m.add_function(wrap_pyfunction!(fit_exponential_rate, m)?)?;
    m.add_function(wrap_pyfunction!(version, m)?)?;
    Ok(())
}
