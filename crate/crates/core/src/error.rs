//! Error types shared across the crate.

use thiserror::Error;

/// Named validation checks run against a scenario before simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Consistency,
    Connectivity,
    WellConfigured,
    Feasibility,
    Rank,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Check::Consistency => "consistency",
            Check::Connectivity => "connectivity",
            Check::WellConfigured => "well_configured",
            Check::Feasibility => "feasibility",
            Check::Rank => "rank",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop on node {node}")]
    SelfLoop { node: usize },

    #[error("duplicate undirected edge ({i}, {j})")]
    DuplicateEdge { i: usize, j: usize },

    #[error("node index {node} out of range 1..={m}")]
    NodeIndexOutOfRange { node: usize, m: usize },

    #[error("constraint matrix is rank deficient ({rows}x{cols}, smallest singular value {sigma_min:.3e})")]
    RankDeficient {
        rows: usize,
        cols: usize,
        sigma_min: f64,
    },

    #[error("missing constraint for edge ({i}, {j})")]
    MissingEdgeConstraint { i: usize, j: usize },

    #[error("constraint ({found_i}, {found_j}) does not match the listed orientation of edge ({i}, {j})")]
    OrientationMismatch {
        i: usize,
        j: usize,
        found_i: usize,
        found_j: usize,
    },

    #[error("dimension mismatch in {what}: expected {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("agent {agent}: no data supplied for neighbor {neighbor}")]
    MissingNeighbor { agent: usize, neighbor: usize },

    #[error("agent {agent}: received data for non-neighbor {neighbor}")]
    UnexpectedNeighbor { agent: usize, neighbor: usize },

    #[error("non-finite derivative at t = {t}")]
    NonFiniteDerivative { t: f64 },

    #[error("adaptive step underflow at t = {t} (step {step:.3e})")]
    StepUnderflow { t: f64, step: f64 },

    #[error("objective of agent {agent} is not in the quadratic class")]
    NonQuadraticObjective { agent: usize },

    #[error("problem has no unique bounded optimum: {detail}")]
    Unbounded { detail: String },

    #[error("reference solver did not converge: KKT residual {kkt_residual:.3e} after {iterations} iterations")]
    NoConvergence { kkt_residual: f64, iterations: usize },

    #[error("insufficient data for rate fit: {usable} usable samples, need at least {required}")]
    InsufficientData { usable: usize, required: usize },

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("validation failed ({check}): {detail}")]
    ValidationFailed { check: Check, detail: String },

    #[error("parse error at line {line}, column {column}: {detail}")]
    Parse {
        line: usize,
        column: usize,
        detail: String,
    },

    #[error("schema error at {path}: {detail}")]
    Schema { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
