//! End-to-end experiment runner: validation, initialization, per-agent
//! derivative assembly with a structural locality audit, metric
//! recording, and convergence-rate fitting.

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::constraints::{
    agreement_error, stack, EdgeConstraint, Feasibility, StackedSystem, DEFAULT_FEASIBILITY_TOL,
};
use crate::dynamics::{self, LocalConstraints, NeighborState, SystemState};
use crate::error::{Check, Error, Result};
use crate::graph::Graph;
use crate::integrate::{self, IntegratorConfig, StopMetric};
use crate::objectives::{self, Objective};
use crate::reference::{self, ReferenceSolution};

/// Values below this floor are integrator/rounding noise and are
/// excluded from log-linear rate fits.
pub const RATE_FIT_FLOOR: f64 = 1e-13;
/// Default fraction of usable samples kept in the middle of the fit window.
pub const RATE_FIT_WINDOW: f64 = 0.6;
const RATE_FIT_MIN_SAMPLES: usize = 10;

/// Which flow a run integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SaddlePoint,
    EdgeOnly,
}

/// Initial condition: explicit vectors or a seeded uniform draw.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Explicit {
        x0: DVector<f64>,
        lambda0: Option<DVector<f64>>,
    },
    UniformRandom { low: f64, high: f64, seed: u64 },
}

impl Init {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Init::UniformRandom { seed, .. } => Some(*seed),
            Init::Explicit { .. } => None,
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub graph: Graph,
    pub constraints: Vec<EdgeConstraint>,
    pub objectives: Vec<Objective>,
    pub mode: Mode,
    pub init: Init,
    pub integrator: IntegratorConfig,
    /// Permits non-zero objectives in agreement-only mode (they are
    /// ignored by that flow). Off by default; not part of the file format.
    pub allow_objectives_in_edge_only: bool,
}

/// Time series of one run with its metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    /// Agreement error V at each recorded time.
    pub agreement: Vec<f64>,
    /// Distance to the reference optimum W, when a reference exists.
    pub distance_to_opt: Option<Vec<f64>>,
}

/// Scalar results of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_v: f64,
    pub final_w: Option<f64>,
    pub final_rhs_norm: f64,
    pub fitted_rate: Option<f64>,
    pub fit_r_squared: Option<f64>,
    pub locality_ok: bool,
    pub wall_time: f64,
    pub seed: Option<u64>,
    pub notes: Vec<String>,
}

/// Outcome of one named validation check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: Check,
    pub passed: bool,
    pub detail: String,
}

/// Outcomes of all validation checks, in execution order. Checks that
/// could not run because an earlier one failed are absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Runs the named checks in order: rank, consistency, connectivity,
/// well-configuredness, feasibility. Stops after the first failure.
pub fn validate(scenario: &Scenario) -> ValidationReport {
    let mut report = ValidationReport::default();

    // rank: every constraint matrix must have full row rank.
    let mut rank_detail = String::from("all edge constraint matrices have full row rank");
    let mut rank_ok = true;
    for c in &scenario.constraints {
        if let Err(e) = c.project() {
            rank_ok = false;
            rank_detail = format!("edge ({}, {}): {e}", c.i + 1, c.j + 1);
            break;
        }
    }
    report.checks.push(CheckResult {
        name: Check::Rank,
        passed: rank_ok,
        detail: rank_detail,
    });
    if !rank_ok {
        return report;
    }

    // consistency: structure of the scenario as a whole.
    let consistency = consistency_check(scenario);
    let consistency_ok = consistency.is_ok();
    report.checks.push(CheckResult {
        name: Check::Consistency,
        passed: consistency_ok,
        detail: consistency.err().unwrap_or_else(|| {
            format!(
                "{} agents, {} edges, one oriented constraint per edge",
                scenario.graph.agent_count(),
                scenario.graph.edge_count()
            )
        }),
    });
    if !consistency_ok {
        return report;
    }

    // connectivity
    let components = scenario.graph.component_count();
    let connected = components == 1;
    report.checks.push(CheckResult {
        name: Check::Connectivity,
        passed: connected,
        detail: format!("{components} connected component(s)"),
    });
    if !connected {
        return report;
    }

    let sys = match stack(&scenario.graph, &scenario.constraints, scenario.n) {
        Ok(sys) => sys,
        Err(e) => {
            report.checks.push(CheckResult {
                name: Check::WellConfigured,
                passed: false,
                detail: format!("stacking failed: {e}"),
            });
            return report;
        }
    };

    let wc = sys.well_configured();
    report.checks.push(CheckResult {
        name: Check::WellConfigured,
        passed: wc.ok,
        detail: format!(
            "rank(P_bar H_bar) = {}, rank(H_bar' P_bar H_bar) = {}",
            wc.rank_ph, wc.rank_hph
        ),
    });
    if !wc.ok {
        return report;
    }

    match sys.feasible_point(DEFAULT_FEASIBILITY_TOL) {
        Feasibility::Feasible(_) => report.checks.push(CheckResult {
            name: Check::Feasibility,
            passed: true,
            detail: format!("least-squares residual <= {DEFAULT_FEASIBILITY_TOL:.0e}"),
        }),
        Feasibility::Infeasible { residual } => report.checks.push(CheckResult {
            name: Check::Feasibility,
            passed: false,
            detail: format!("agreements inconsistent, least-squares residual {residual:.3e}"),
        }),
    }

    // Strict convexity is not machine-verified; flag the clearly
    // degenerate case where no agent contributes curvature.
    if scenario.mode == Mode::SaddlePoint {
        if let Ok(x0) = initialize(scenario) {
            let all_singular = scenario.objectives.iter().enumerate().all(|(i, obj)| {
                let xi = x0.x.rows(i * scenario.n, scenario.n).into_owned();
                match obj.hessian(&xi) {
                    Ok(h) => crate::linalg::symmetric_eigenvalues(&h)
                        .first()
                        .map(|&e| e <= 1e-10)
                        .unwrap_or(true),
                    Err(_) => true,
                }
            });
            if all_singular {
                report.warnings.push(
                    "every agent's objective Hessian is singular at the initial point; \
                     the global objective is not strictly convex there and the optimum \
                     may not be unique"
                        .to_string(),
                );
            }
        }
    }

    report
}

fn consistency_check(scenario: &Scenario) -> std::result::Result<(), String> {
    let m = scenario.graph.agent_count();
    if scenario.objectives.len() != m {
        return Err(format!(
            "expected {m} objectives, got {}",
            scenario.objectives.len()
        ));
    }
    if scenario.constraints.len() != scenario.graph.edge_count() {
        return Err(format!(
            "expected {} constraints, got {}",
            scenario.graph.edge_count(),
            scenario.constraints.len()
        ));
    }
    for (k, (&(i, j), c)) in scenario
        .graph
        .edges()
        .iter()
        .zip(&scenario.constraints)
        .enumerate()
    {
        if (c.i, c.j) == (j, i) {
            return Err(format!(
                "constraint {} is oriented ({}, {}) but the edge is listed ({}, {})",
                k + 1,
                c.j + 1,
                c.i + 1,
                i + 1,
                j + 1
            ));
        }
        if (c.i, c.j) != (i, j) {
            return Err(format!(
                "constraint {} is for ({}, {}) but the edge is listed ({}, {})",
                k + 1,
                c.i + 1,
                c.j + 1,
                i + 1,
                j + 1
            ));
        }
        if c.a.ncols() != scenario.n {
            return Err(format!(
                "constraint {} has {} columns, expected {}",
                k + 1,
                c.a.ncols(),
                scenario.n
            ));
        }
    }
    for (i, obj) in scenario.objectives.iter().enumerate() {
        obj.validate(scenario.n)
            .map_err(|e| format!("objective of agent {}: {e}", i + 1))?;
    }
    if scenario.mode == Mode::EdgeOnly
        && !scenario.allow_objectives_in_edge_only
        && scenario
            .objectives
            .iter()
            .any(|o| !matches!(o, Objective::Zero))
    {
        return Err(
            "agreement-only mode ignores objectives; make them all zero or set the override"
                .to_string(),
        );
    }
    if let Init::Explicit { x0, lambda0 } = &scenario.init {
        let mn = m * scenario.n;
        if x0.len() != mn {
            return Err(format!("explicit x0 has length {}, expected {mn}", x0.len()));
        }
        if let Some(l0) = lambda0 {
            if l0.len() != mn {
                return Err(format!(
                    "explicit lambda0 has length {}, expected {mn}",
                    l0.len()
                ));
            }
        }
    }
    scenario
        .integrator
        .validate()
        .map_err(|e| e.to_string())?;
    Ok(())
}

/// Draws or copies the initial state. Random entries come from a seeded
/// deterministic generator, index by index, so a seed fully reproduces
/// a run; the multiplier starts at zero unless given explicitly.
pub fn initialize(scenario: &Scenario) -> Result<SystemState> {
    let mn = scenario.graph.agent_count() * scenario.n;
    match &scenario.init {
        Init::Explicit { x0, lambda0 } => {
            if x0.len() != mn {
                return Err(Error::DimensionMismatch {
                    what: "explicit x0",
                    expected: mn,
                    found: x0.len(),
                });
            }
            let lambda = match lambda0 {
                Some(l0) if l0.len() != mn => {
                    return Err(Error::DimensionMismatch {
                        what: "explicit lambda0",
                        expected: mn,
                        found: l0.len(),
                    })
                }
                Some(l0) => l0.clone(),
                None => DVector::zeros(mn),
            };
            Ok(SystemState {
                x: x0.clone(),
                lambda,
                t: 0.0,
            })
        }
        Init::UniformRandom { low, high, seed } => {
            let ordered = low < high;
            if !ordered {
                return Err(Error::InvalidConfig(format!(
                    "uniform init needs low < high, got [{low}, {high}]"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let x = DVector::from_fn(mn, |_, _| rng.random_range(*low..*high));
            Ok(SystemState {
                x,
                lambda: DVector::zeros(mn),
                t: 0.0,
            })
        }
    }
}

/// Assembles the global derivative from per-agent evaluations only.
/// Each agent receives snapshots for exactly the neighbors in the
/// assembler's slicing sets; the audit compares those sets against the
/// graph's neighbor sets on every evaluation.
pub struct PerAgentAssembler {
    n: usize,
    objectives: Vec<Objective>,
    slice_sets: Vec<BTreeSet<usize>>,
    graph_sets: Vec<BTreeSet<usize>>,
    locals: Vec<LocalConstraints>,
    audit_failed: std::cell::Cell<bool>,
    evaluations: std::cell::Cell<u64>,
}

impl PerAgentAssembler {
    pub fn new(graph: &Graph, sys: &StackedSystem, objectives: &[Objective]) -> Self {
        Self {
            n: sys.dimension(),
            objectives: objectives.to_vec(),
            slice_sets: graph.neighbor_sets().to_vec(),
            graph_sets: graph.neighbor_sets().to_vec(),
            locals: dynamics::local_constraints(sys),
            audit_failed: std::cell::Cell::new(false),
            evaluations: std::cell::Cell::new(0),
        }
    }

    /// Test hook: assemble with tampered neighbor sets. The locality
    /// audit must then report failure.
    pub fn with_slice_sets(
        graph: &Graph,
        sys: &StackedSystem,
        objectives: &[Objective],
        slice_sets: Vec<BTreeSet<usize>>,
    ) -> Self {
        let mut locals = dynamics::local_constraints(sys);
        for (local, keep) in locals.iter_mut().zip(&slice_sets) {
            local.restrict_to(keep);
        }
        Self {
            n: sys.dimension(),
            objectives: objectives.to_vec(),
            slice_sets,
            graph_sets: graph.neighbor_sets().to_vec(),
            locals,
            audit_failed: std::cell::Cell::new(false),
            evaluations: std::cell::Cell::new(0),
        }
    }

    fn audit_step(&self) {
        self.evaluations.set(self.evaluations.get() + 1);
        if self.slice_sets != self.graph_sets {
            self.audit_failed.set(true);
        }
    }

    /// True iff every evaluation so far passed data for exactly the
    /// graph's neighbor sets.
    pub fn locality_ok(&self) -> bool {
        self.evaluations.get() > 0 && !self.audit_failed.get()
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.get()
    }

    /// Primal-dual derivative of the stacked state [x; lambda].
    pub fn saddle_rhs(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.audit_step();
        let n = self.n;
        let mut xdot = DVector::zeros(x.len());
        let mut lambdadot = DVector::zeros(x.len());
        for (i, local) in self.locals.iter().enumerate() {
            let xi = x.rows(i * n, n).into_owned();
            let li = lambda.rows(i * n, n).into_owned();
            let snapshots: Vec<NeighborState> = self.slice_sets[i]
                .iter()
                .map(|&j| NeighborState {
                    agent: j,
                    x: x.rows(j * n, n).into_owned(),
                    lambda: lambda.rows(j * n, n).into_owned(),
                })
                .collect();
            let (xd, ld) = dynamics::saddle_rhs_local(&self.objectives[i], local, &xi, &li, &snapshots)?;
            xdot.rows_mut(i * n, n).copy_from(&xd);
            lambdadot.rows_mut(i * n, n).copy_from(&ld);
        }
        Ok((xdot, lambdadot))
    }

    /// Agreement-only derivative of x.
    pub fn edge_only_rhs(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.audit_step();
        let n = self.n;
        let mut xdot = DVector::zeros(x.len());
        for (i, local) in self.locals.iter().enumerate() {
            let xi = x.rows(i * n, n).into_owned();
            let snapshots: Vec<(usize, DVector<f64>)> = self.slice_sets[i]
                .iter()
                .map(|&j| (j, x.rows(j * n, n).into_owned()))
                .collect();
            let xd = dynamics::edge_only_rhs_local(local, &xi, &snapshots)?;
            xdot.rows_mut(i * n, n).copy_from(&xd);
        }
        Ok(xdot)
    }
}

/// Structural locality verdict of an assembler against the graph.
pub fn locality_audit(assembler: &PerAgentAssembler, graph: &Graph) -> bool {
    assembler.locality_ok() && assembler.graph_sets == graph.neighbor_sets()
}

/// Validates, initializes, integrates, and summarizes one scenario.
pub fn run(scenario: &Scenario) -> Result<(Trajectory, RunSummary)> {
    let report = validate(scenario);
    if let Some(fail) = report.first_failure() {
        return Err(Error::ValidationFailed {
            check: fail.name,
            detail: fail.detail.clone(),
        });
    }
    let mut notes = report.warnings.clone();

    let sys = stack(&scenario.graph, &scenario.constraints, scenario.n)?;
    let assembler = PerAgentAssembler::new(&scenario.graph, &sys, &scenario.objectives);
    let state0 = initialize(scenario)?;
    let mn = state0.x.len();

    // Centralized reference for W, attempted only in primal-dual mode
    // with a nonconstant global objective.
    let wants_reference = scenario.mode == Mode::SaddlePoint
        && scenario
            .objectives
            .iter()
            .any(|o| !matches!(o, Objective::Zero));
    let reference: Option<ReferenceSolution> = if wants_reference {
        let init = match sys.feasible_point(DEFAULT_FEASIBILITY_TOL) {
            Feasibility::Feasible(x) => x,
            Feasibility::Infeasible { .. } => DVector::zeros(mn),
        };
        match reference::solve_general(&sys, &scenario.objectives, &init) {
            Ok(sol) => {
                if !unique_optimum(&sys, &scenario.objectives, &sol) {
                    notes.push(
                        "objective is not strictly convex; W is measured against one \
                         particular optimum"
                            .to_string(),
                    );
                }
                Some(sol)
            }
            Err(Error::NoConvergence { kkt_residual, iterations }) => {
                notes.push(format!(
                    "reference solver did not converge (KKT residual {kkt_residual:.3e} \
                     after {iterations} iterations); W not recorded"
                ));
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    if let Some(rule) = &scenario.integrator.stop_on {
        if rule.metric == StopMetric::DistanceToOpt && reference.is_none() {
            return Err(Error::ValidationFailed {
                check: Check::Consistency,
                detail: "stop rule watches W but no reference solution is available".to_string(),
            });
        }
    }

    let started = Instant::now();
    let output = match scenario.mode {
        Mode::SaddlePoint => {
            let y0 = stack_state(&state0.x, &state0.lambda);
            let rhs = |_t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
                let (x, lambda) = split_state(y, mn);
                let (xdot, lambdadot) = assembler.saddle_rhs(&x, &lambda)?;
                Ok(stack_state(&xdot, &lambdadot))
            };
            let mut stop_fn = stop_closure(scenario, &sys, reference.as_ref(), mn);
            integrate::integrate(
                rhs,
                y0,
                &scenario.integrator,
                stop_fn.as_mut().map(|f| f as &mut dyn FnMut(f64, &DVector<f64>) -> bool),
            )?
        }
        Mode::EdgeOnly => {
            let rhs = |_t: f64, x: &DVector<f64>| assembler.edge_only_rhs(x);
            let mut stop_fn = stop_closure(scenario, &sys, reference.as_ref(), mn);
            integrate::integrate(
                rhs,
                state0.x.clone(),
                &scenario.integrator,
                stop_fn.as_mut().map(|f| f as &mut dyn FnMut(f64, &DVector<f64>) -> bool),
            )?
        }
    };
    let wall_time = started.elapsed().as_secs_f64();

    // Unpack records into domain states and metric series.
    let mut states = Vec::with_capacity(output.times.len());
    let mut agreement = Vec::with_capacity(output.times.len());
    let mut distance = reference.as_ref().map(|_| Vec::with_capacity(output.times.len()));
    for (&t, y) in output.times.iter().zip(&output.states) {
        let (x, lambda) = match scenario.mode {
            Mode::SaddlePoint => split_state(y, mn),
            Mode::EdgeOnly => (y.clone(), DVector::zeros(mn)),
        };
        agreement.push(agreement_error(&scenario.constraints, scenario.n, &x));
        if let (Some(series), Some(sol)) = (distance.as_mut(), reference.as_ref()) {
            series.push(reference::distance_to_opt(&x, sol)?);
        }
        states.push(SystemState { x, lambda, t });
    }

    let final_state = states.last().expect("at least the initial record");
    let final_rhs_norm = match scenario.mode {
        Mode::SaddlePoint => {
            let (xdot, lambdadot) = assembler.saddle_rhs(&final_state.x, &final_state.lambda)?;
            stack_state(&xdot, &lambdadot).norm()
        }
        Mode::EdgeOnly => assembler.edge_only_rhs(&final_state.x)?.norm(),
    };

    let fit_series: &[f64] = match (scenario.mode, distance.as_ref()) {
        (Mode::SaddlePoint, Some(w)) => w,
        _ => &agreement,
    };
    let (fitted_rate, fit_r_squared) =
        match fit_exponential_rate(&output.times, fit_series, RATE_FIT_WINDOW) {
            Ok((rate, r2)) => (Some(rate), Some(r2)),
            Err(Error::InsufficientData { .. }) => (None, None),
            Err(e) => return Err(e),
        };

    let summary = RunSummary {
        final_v: *agreement.last().expect("nonempty"),
        final_w: distance.as_ref().map(|w| *w.last().expect("nonempty")),
        final_rhs_norm,
        fitted_rate,
        fit_r_squared,
        locality_ok: locality_audit(&assembler, &scenario.graph),
        wall_time,
        seed: scenario.init.seed(),
        notes,
    };
    let trajectory = Trajectory {
        times: output.times,
        states,
        agreement,
        distance_to_opt: distance,
    };
    Ok((trajectory, summary))
}

/// Uniqueness proxy: curvature plus constraint rows span the state space.
fn unique_optimum(sys: &StackedSystem, objectives: &[Objective], sol: &ReferenceSolution) -> bool {
    let n = sys.dimension();
    let hess = match objectives::block_hessian(objectives, n, &sol.x_star) {
        Ok(h) => h,
        Err(_) => return false,
    };
    let ph = sys.p_bar() * sys.h_bar();
    let stacked = crate::linalg::vstack(&hess, &ph);
    crate::linalg::rank(&stacked) == sol.x_star.len()
}

type BoxedStop<'a> = Box<dyn FnMut(f64, &DVector<f64>) -> bool + 'a>;

fn stop_closure<'a>(
    scenario: &'a Scenario,
    sys: &'a StackedSystem,
    reference: Option<&'a ReferenceSolution>,
    mn: usize,
) -> Option<BoxedStop<'a>> {
    let rule = scenario.integrator.stop_on.as_ref()?;
    let metric = rule.metric;
    let threshold = rule.threshold;
    let mode = scenario.mode;
    let constraints = &scenario.constraints;
    let objectives = &scenario.objectives;
    let n = scenario.n;
    Some(Box::new(move |_t: f64, y: &DVector<f64>| -> bool {
        let (x, lambda) = match mode {
            Mode::SaddlePoint => split_state(y, mn),
            Mode::EdgeOnly => (y.clone(), DVector::zeros(mn)),
        };
        let value = match metric {
            StopMetric::AgreementError => agreement_error(constraints, n, &x),
            StopMetric::DistanceToOpt => reference
                .map(|sol| reference::distance_to_opt(&x, sol).unwrap_or(f64::INFINITY))
                .unwrap_or(f64::INFINITY),
            StopMetric::RhsNorm => match mode {
                Mode::SaddlePoint => {
                    match dynamics::saddle_rhs_compact(sys, objectives, &x, &lambda) {
                        Ok((xd, ld)) => stack_state(&xd, &ld).norm(),
                        Err(_) => f64::INFINITY,
                    }
                }
                Mode::EdgeOnly => dynamics::edge_only_rhs_compact(sys, &x)
                    .map(|d| d.norm())
                    .unwrap_or(f64::INFINITY),
            },
        };
        value <= threshold
    }))
}

fn stack_state(x: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(x.len() + lambda.len());
    y.rows_mut(0, x.len()).copy_from(x);
    y.rows_mut(x.len(), lambda.len()).copy_from(lambda);
    y
}

fn split_state(y: &DVector<f64>, mn: usize) -> (DVector<f64>, DVector<f64>) {
    (y.rows(0, mn).into_owned(), y.rows(mn, y.len() - mn).into_owned())
}

/// Least-squares slope of `ln(series)` over time. Samples at or below
/// `RATE_FIT_FLOOR` are noise and are dropped; of the rest, the fit
/// keeps the middle `window` fraction of the spanned time, which
/// excludes the transient head and is robust to the uneven sample
/// spacing an adaptive integrator produces. Returns the decay rate
/// (negated slope) and the r-squared of the fit.
pub fn fit_exponential_rate(
    times: &[f64],
    series: &[f64],
    window: f64,
) -> Result<(f64, f64)> {
    assert_eq!(times.len(), series.len(), "series length");
    assert!(window > 0.0 && window <= 1.0, "window fraction in (0, 1]");
    let usable: Vec<(f64, f64)> = times
        .iter()
        .zip(series)
        .filter(|(_, &v)| v.is_finite() && v > RATE_FIT_FLOOR)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if usable.len() < RATE_FIT_MIN_SAMPLES {
        return Err(Error::InsufficientData {
            usable: usable.len(),
            required: RATE_FIT_MIN_SAMPLES,
        });
    }
    let t_first = usable.first().expect("nonempty").0;
    let t_last = usable.last().expect("nonempty").0;
    let margin = (t_last - t_first) * (1.0 - window) / 2.0;
    let (t_lo, t_hi) = (t_first + margin, t_last - margin);
    let windowed: Vec<(f64, f64)> = usable
        .iter()
        .copied()
        .filter(|(t, _)| (t_lo..=t_hi).contains(t))
        .collect();
    if windowed.len() < 2 {
        return Err(Error::InsufficientData {
            usable: windowed.len(),
            required: 2,
        });
    }
    let windowed = &windowed[..];

    let count = windowed.len() as f64;
    let mean_t = windowed.iter().map(|(t, _)| t).sum::<f64>() / count;
    let mean_v = windowed.iter().map(|(_, v)| v).sum::<f64>() / count;
    let mut cov = 0.0;
    let mut var_t = 0.0;
    for (t, v) in windowed {
        cov += (t - mean_t) * (v - mean_v);
        var_t += (t - mean_t) * (t - mean_t);
    }
    if var_t == 0.0 {
        return Err(Error::InsufficientData {
            usable: 1,
            required: RATE_FIT_MIN_SAMPLES,
        });
    }
    let slope = cov / var_t;
    let intercept = mean_v - slope * mean_t;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (t, v) in windowed {
        let predicted = intercept + slope * t;
        ss_res += (v - predicted) * (v - predicted);
        ss_tot += (v - mean_v) * (v - mean_v);
    }
    let r_squared = if ss_tot <= f64::MIN_POSITIVE {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok((-slope, r_squared))
}
