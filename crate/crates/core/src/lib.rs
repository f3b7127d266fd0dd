//! Continuous-time distributed optimization under edge agreements.
//!
//! A group of agents on an undirected graph minimizes the sum of their
//! private convex objectives while every pair of neighbors satisfies a
//! linear agreement `A_ij (x_i - x_j) = b_ij` on its edge — consensus is
//! the special case `A = I`, `b = 0`. Two continuous-time flows solve
//! this: a primal-dual flow on an augmented Lagrangian for the full
//! problem, and a multiplier-free flow for the agreement-only case.
//! Both admit per-agent updates that touch nothing beyond an agent's
//! neighborhood, and the library assembles its simulations exclusively
//! from those per-agent updates so the locality claim stays auditable.
//!
//! The crate ships:
//!
//! - [`graph`], [`constraints`]: the communication graph, incidence
//!   operators, per-edge constraints, projections, and the stacked
//!   block system with feasibility and configuration diagnostics;
//! - [`objectives`]: analytic objective oracles with a finite-difference
//!   gradient validator;
//! - [`dynamics`], [`integrate`]: the flow right-hand sides (compact and
//!   per-agent) and fixed/adaptive Runge-Kutta integration;
//! - [`reference`]: an independent centralized solver (exact KKT for the
//!   quadratic class, method of multipliers in general) providing the
//!   ground-truth optimum for the distance metric;
//! - [`harness`], [`scenario`]: the experiment runner with metric
//!   recording, locality audit, rate fitting, and the JSON scenario
//!   format consumed by the `edgeflow` CLI.

pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod harness;
pub mod integrate;
pub mod linalg;
pub mod objectives;
pub mod reference;
pub mod scenario;

pub use constraints::{
    agreement_error, stack, EdgeConstraint, Feasibility, ProjectedConstraint, StackedSystem,
};
pub use error::{Check, Error, Result};
pub use graph::Graph;
pub use harness::{
    fit_exponential_rate, initialize, locality_audit, run, validate, Init, Mode,
    PerAgentAssembler, RunSummary, Scenario, Trajectory, ValidationReport,
};
pub use integrate::{IntegratorConfig, Method, StopMetric, StopRule};
pub use objectives::Objective;
pub use reference::{distance_to_opt, solve_general, solve_quadratic_kkt, ReferenceSolution};
