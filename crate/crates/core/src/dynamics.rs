//! Right-hand sides of the two continuous-time flows.
//!
//! The primal-dual flow runs gradient descent in the agent states and
//! gradient ascent in the multipliers on the augmented Lagrangian
//!
//! ```text
//! F(x, l) = f(x) + l' H_bar' P_bar (H_bar x - b_bar)
//!           + 1/2 || P_bar (H_bar x - b_bar) ||^2 .
//! ```
//!
//! The agreement-only flow drops the objective and multiplier terms.
//! Both flows exist in a compact (stacked) form and a per-agent form
//! that reads nothing beyond an agent's own and its neighbors' data;
//! their equality is the distributedness property the tests pin down.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::constraints::StackedSystem;
use crate::error::{Error, Result};
use crate::objectives::{self, Objective};

/// Joint state of the primal-dual flow at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub t: f64,
}

/// Constraint data one agent holds: the oriented pair (P, b_bar) for
/// each of its neighbors. For an edge listed (i, j), agent i stores
/// +b_bar and agent j stores -b_bar, so both sides see the agreement
/// from their own perspective.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalConstraints {
    agent: usize,
    per_neighbor: BTreeMap<usize, (DMatrix<f64>, DVector<f64>)>,
}

impl LocalConstraints {
    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_neighbor.keys().copied()
    }

    pub fn get(&self, neighbor: usize) -> Option<&(DMatrix<f64>, DVector<f64>)> {
        self.per_neighbor.get(&neighbor)
    }

    /// Drops every neighbor not in `keep`. Test hook for the locality
    /// audit's negative control.
    pub fn restrict_to(&mut self, keep: &std::collections::BTreeSet<usize>) {
        self.per_neighbor.retain(|j, _| keep.contains(j));
    }
}

/// Per-agent constraint tables for all agents, derived from the stacked
/// system's edge blocks.
pub fn local_constraints(sys: &StackedSystem) -> Vec<LocalConstraints> {
    let n = sys.dimension();
    let mut tables: Vec<LocalConstraints> = (0..sys.agent_count())
        .map(|agent| LocalConstraints {
            agent,
            per_neighbor: BTreeMap::new(),
        })
        .collect();
    for (k, &(i, j)) in sys.edges().iter().enumerate() {
        let block = sys.block(k);
        tables[i]
            .per_neighbor
            .insert(j, (block.p.clone(), block.b_bar.clone()));
        tables[j]
            .per_neighbor
            .insert(i, (block.p.clone(), -&block.b_bar));
        debug_assert_eq!(block.p.nrows(), n);
    }
    tables
}

/// State snapshot an agent receives from one neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborState {
    pub agent: usize,
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
}

/// Value of the augmented Lagrangian at (x, lambda).
pub fn lagrangian_value(
    sys: &StackedSystem,
    objectives: &[Objective],
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<f64> {
    check_lambda(sys, lambda)?;
    let e = sys.residual(x)?;
    let f = objectives::total_value(objectives, sys.dimension(), x)?;
    Ok(f + lambda.dot(&(sys.h_bar().transpose() * &e)) + 0.5 * e.norm_squared())
}

/// Compact primal-dual flow:
/// `xdot = -grad f(x) - H_bar' P_bar H_bar lambda - H_bar' P_bar (H_bar x - b_bar)`,
/// `lambdadot = H_bar' P_bar (H_bar x - b_bar)`.
pub fn saddle_rhs_compact(
    sys: &StackedSystem,
    objectives: &[Objective],
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_lambda(sys, lambda)?;
    let e = sys.residual(x)?;
    let pulled = sys.h_bar().transpose() * e;
    let coupling = sys.h_bar().transpose() * (sys.p_bar() * (sys.h_bar() * lambda));
    let grad = objectives::stacked_gradient(objectives, sys.dimension(), x)?;
    let xdot = -grad - coupling - &pulled;
    Ok((xdot, pulled))
}

/// Per-agent primal-dual update. Consumes only the agent's own state,
/// its neighbors' snapshots, and its local constraint table.
pub fn saddle_rhs_local(
    objective: &Objective,
    local: &LocalConstraints,
    x_i: &DVector<f64>,
    lambda_i: &DVector<f64>,
    neighbors: &[NeighborState],
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_neighbor_cover(local, neighbors.iter().map(|s| s.agent))?;
    let mut xdot = -objective.gradient(x_i)?;
    let mut lambdadot = DVector::zeros(x_i.len());
    for s in neighbors {
        let (p, b_bar) = local.get(s.agent).expect("cover checked");
        let agreement_gap = p * (x_i - &s.x - b_bar);
        xdot -= p * (lambda_i - &s.lambda);
        xdot -= &agreement_gap;
        lambdadot += &agreement_gap;
    }
    Ok((xdot, lambdadot))
}

/// Per-agent agreement-only update:
/// `xdot_i = -sum_j P_ij (x_i - x_j - b_bar_ij)`.
pub fn edge_only_rhs_local(
    local: &LocalConstraints,
    x_i: &DVector<f64>,
    neighbors: &[(usize, DVector<f64>)],
) -> Result<DVector<f64>> {
    check_neighbor_cover(local, neighbors.iter().map(|(j, _)| *j))?;
    let mut xdot = DVector::zeros(x_i.len());
    for (j, x_j) in neighbors {
        let (p, b_bar) = local.get(*j).expect("cover checked");
        xdot -= p * (x_i - x_j - b_bar);
    }
    Ok(xdot)
}

/// Compact agreement-only flow `xdot = -H_bar' P_bar (H_bar x - b_bar)`.
pub fn edge_only_rhs_compact(sys: &StackedSystem, x: &DVector<f64>) -> Result<DVector<f64>> {
    let e = sys.residual(x)?;
    Ok(-(sys.h_bar().transpose() * e))
}

/// Norms of the two equilibrium conditions of the primal-dual flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumResidual {
    /// `|| H_bar' P_bar (H_bar x - b_bar) ||`
    pub primal: f64,
    /// `|| grad f(x) + H_bar' P_bar H_bar lambda ||`
    pub stationarity: f64,
}

pub fn equilibrium_residual(
    sys: &StackedSystem,
    objectives: &[Objective],
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<EquilibriumResidual> {
    check_lambda(sys, lambda)?;
    let e = sys.residual(x)?;
    let primal = (sys.h_bar().transpose() * e).norm();
    let grad = objectives::stacked_gradient(objectives, sys.dimension(), x)?;
    let coupling = sys.h_bar().transpose() * (sys.p_bar() * (sys.h_bar() * lambda));
    let stationarity = (grad + coupling).norm();
    Ok(EquilibriumResidual {
        primal,
        stationarity,
    })
}

/// `M = P_bar H_bar H_bar' P_bar`, the generator of the agreement-error
/// dynamics `edot = -M e` along the agreement-only flow. Symmetric
/// positive semidefinite.
pub fn error_matrix(sys: &StackedSystem) -> DMatrix<f64> {
    let ph = sys.p_bar() * sys.h_bar();
    &ph * ph.transpose()
}

/// Checks the identity `edot = -M e` against a finite difference in
/// time. Each sampled state is advanced by one fourth-order step of
/// +/- `dt` along the agreement-only flow; the centered difference of
/// the resulting residuals is compared with `-M e`. Returns the largest
/// entrywise deviation over the samples.
pub fn error_dynamics_check(
    sys: &StackedSystem,
    samples: &[DVector<f64>],
    dt: f64,
) -> Result<f64> {
    let m = error_matrix(sys);
    let mut worst = 0.0f64;
    for x in samples {
        let forward = micro_step(sys, x, dt)?;
        let backward = micro_step(sys, x, -dt)?;
        let e_plus = sys.residual(&forward)?;
        let e_minus = sys.residual(&backward)?;
        let e = sys.residual(x)?;
        let fd = (e_plus - e_minus) / (2.0 * dt);
        let deviation = (fd + &m * e).amax();
        worst = worst.max(deviation);
    }
    Ok(worst)
}

/// One classical fourth-order step of the agreement-only flow.
fn micro_step(sys: &StackedSystem, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
    let k1 = edge_only_rhs_compact(sys, x)?;
    let k2 = edge_only_rhs_compact(sys, &(x + 0.5 * dt * &k1))?;
    let k3 = edge_only_rhs_compact(sys, &(x + 0.5 * dt * &k2))?;
    let k4 = edge_only_rhs_compact(sys, &(x + dt * &k3))?;
    Ok(x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

fn check_lambda(sys: &StackedSystem, lambda: &DVector<f64>) -> Result<()> {
    let expected = sys.agent_count() * sys.dimension();
    if lambda.len() != expected {
        return Err(Error::DimensionMismatch {
            what: "stacked multiplier",
            expected,
            found: lambda.len(),
        });
    }
    Ok(())
}

fn check_neighbor_cover(
    local: &LocalConstraints,
    provided: impl Iterator<Item = usize>,
) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for j in provided {
        if !local.per_neighbor.contains_key(&j) {
            return Err(Error::UnexpectedNeighbor {
                agent: local.agent + 1,
                neighbor: j + 1,
            });
        }
        seen.insert(j);
    }
    for j in local.per_neighbor.keys() {
        if !seen.contains(j) {
            return Err(Error::MissingNeighbor {
                agent: local.agent + 1,
                neighbor: j + 1,
            });
        }
    }
    Ok(())
}
