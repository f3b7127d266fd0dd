//! Scenario file ingestion and emission.
//!
//! Scenarios are strict JSON documents: unknown keys are rejected so a
//! typo cannot silently change an experiment. Matrices are row-major
//! nested arrays, auditable against published constants. Node indices
//! are 1-based in files.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraints::EdgeConstraint;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::harness::{self, Init, Mode, Scenario};
use crate::integrate::{IntegratorConfig, Method, StopRule};
use crate::objectives::Objective;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub n: usize,
    pub agents: Vec<AgentEntry>,
    pub edges: Vec<EdgeEntry>,
    pub mode: ModeEntry,
    pub init: InitEntry,
    pub integrator: IntegratorEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: usize,
    pub objective: ObjectiveEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveEntry {
    Zero,
    SquaredDistance {
        target: Vec<f64>,
        #[serde(default = "default_weight", skip_serializing_if = "is_unit_weight")]
        weight: f64,
    },
    Quadratic {
        q: Vec<Vec<f64>>,
        c: Vec<f64>,
        r: f64,
    },
    ExpSum,
}

fn default_weight() -> f64 {
    1.0
}

fn is_unit_weight(w: &f64) -> bool {
    *w == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub i: usize,
    pub j: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeEntry {
    SaddlePoint,
    EdgeOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitEntry {
    Explicit {
        x0: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda0: Option<Vec<f64>>,
    },
    Uniform { low: f64, high: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorEntry {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    pub t_end: f64,
    pub record_every: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_on: Option<StopRule>,
}

/// Parses a scenario document without running the semantic checks.
pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = match serde_path_to_error::deserialize(de) {
        Ok(file) => file,
        Err(err) => {
            let inner = err.inner();
            if inner.is_syntax() || inner.is_eof() {
                return Err(Error::Parse {
                    line: inner.line(),
                    column: inner.column(),
                    detail: inner.to_string(),
                });
            }
            return Err(Error::Schema {
                path: err.path().to_string(),
                detail: inner.to_string(),
            });
        }
    };
    scenario_from_file(&file)
}

/// Loads and fully validates a scenario. The first failing named check
/// surfaces as `ValidationFailed`.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let scenario = parse_scenario_str(&std::fs::read_to_string(path)?)?;
    let report = harness::validate(&scenario);
    if let Some(fail) = report.first_failure() {
        return Err(Error::ValidationFailed {
            check: fail.name,
            detail: fail.detail.clone(),
        });
    }
    Ok(scenario)
}

/// Parses without validation; used by `check` to report every check.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    parse_scenario_str(&std::fs::read_to_string(path)?)
}

pub fn scenario_from_file(file: &ScenarioFile) -> Result<Scenario> {
    if file.version != SCHEMA_VERSION {
        return Err(Error::Schema {
            path: "version".to_string(),
            detail: format!("unsupported version {}, expected {SCHEMA_VERSION}", file.version),
        });
    }
    let m = file.agents.len();
    for (idx, agent) in file.agents.iter().enumerate() {
        if agent.id != idx + 1 {
            return Err(Error::Schema {
                path: format!("agents[{idx}].id"),
                detail: format!("ids must be 1..={m} in order, got {}", agent.id),
            });
        }
    }
    let edge_pairs: Vec<(usize, usize)> = file.edges.iter().map(|e| (e.i, e.j)).collect();
    let graph = Graph::new(m, &edge_pairs)?;

    let mut constraints = Vec::with_capacity(file.edges.len());
    for (idx, e) in file.edges.iter().enumerate() {
        let a = matrix_from_rows(&e.a, file.n, &format!("edges[{idx}].A"))?;
        let b = DVector::from_column_slice(&e.b);
        if b.len() != a.nrows() {
            return Err(Error::Schema {
                path: format!("edges[{idx}].b"),
                detail: format!("length {} does not match A's {} row(s)", b.len(), a.nrows()),
            });
        }
        constraints.push(EdgeConstraint::new(e.i - 1, e.j - 1, a, b)?);
    }

    let objectives: Vec<Objective> = file
        .agents
        .iter()
        .enumerate()
        .map(|(idx, agent)| objective_from_entry(&agent.objective, file.n, idx))
        .collect::<Result<_>>()?;

    let init = match &file.init {
        InitEntry::Explicit { x0, lambda0 } => Init::Explicit {
            x0: DVector::from_column_slice(x0),
            lambda0: lambda0.as_ref().map(|l| DVector::from_column_slice(l)),
        },
        InitEntry::Uniform { low, high, seed } => Init::UniformRandom {
            low: *low,
            high: *high,
            seed: *seed,
        },
    };

    let defaults = IntegratorConfig::default();
    let integrator = IntegratorConfig {
        method: file.integrator.method,
        dt: file.integrator.dt.unwrap_or(defaults.dt),
        rtol: file.integrator.rtol.unwrap_or(defaults.rtol),
        atol: file.integrator.atol.unwrap_or(defaults.atol),
        t_end: file.integrator.t_end,
        record_every: file.integrator.record_every,
        stop_on: file.integrator.stop_on,
    };

    Ok(Scenario {
        n: file.n,
        graph,
        constraints,
        objectives,
        mode: match file.mode {
            ModeEntry::SaddlePoint => Mode::SaddlePoint,
            ModeEntry::EdgeOnly => Mode::EdgeOnly,
        },
        init,
        integrator,
        allow_objectives_in_edge_only: false,
    })
}

pub fn scenario_to_file(scenario: &Scenario) -> ScenarioFile {
    let agents = scenario
        .objectives
        .iter()
        .enumerate()
        .map(|(idx, obj)| AgentEntry {
            id: idx + 1,
            objective: objective_to_entry(obj),
        })
        .collect();
    let edges = scenario
        .constraints
        .iter()
        .map(|c| EdgeEntry {
            i: c.i + 1,
            j: c.j + 1,
            a: matrix_to_rows(&c.a),
            b: c.b.iter().copied().collect(),
        })
        .collect();
    let init = match &scenario.init {
        Init::Explicit { x0, lambda0 } => InitEntry::Explicit {
            x0: x0.iter().copied().collect(),
            lambda0: lambda0.as_ref().map(|l| l.iter().copied().collect()),
        },
        Init::UniformRandom { low, high, seed } => InitEntry::Uniform {
            low: *low,
            high: *high,
            seed: *seed,
        },
    };
    ScenarioFile {
        version: SCHEMA_VERSION,
        n: scenario.n,
        agents,
        edges,
        mode: match scenario.mode {
            Mode::SaddlePoint => ModeEntry::SaddlePoint,
            Mode::EdgeOnly => ModeEntry::EdgeOnly,
        },
        init,
        integrator: IntegratorEntry {
            method: scenario.integrator.method,
            dt: Some(scenario.integrator.dt),
            rtol: Some(scenario.integrator.rtol),
            atol: Some(scenario.integrator.atol),
            t_end: scenario.integrator.t_end,
            record_every: scenario.integrator.record_every,
            stop_on: scenario.integrator.stop_on,
        },
    }
}

/// Serializes a scenario back to its document form.
pub fn scenario_to_json(scenario: &Scenario) -> String {
    serde_json::to_string_pretty(&scenario_to_file(scenario)).expect("schema types serialize")
}

/// Hash of the canonical document serialization; recorded in run
/// summaries so outputs are traceable to their exact inputs.
pub fn scenario_hash(scenario: &Scenario) -> String {
    let canonical =
        serde_json::to_string(&scenario_to_file(scenario)).expect("schema types serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn objective_from_entry(entry: &ObjectiveEntry, n: usize, agent_idx: usize) -> Result<Objective> {
    let obj = match entry {
        ObjectiveEntry::Zero => Objective::Zero,
        ObjectiveEntry::SquaredDistance { target, weight } => Objective::SquaredDistance {
            target: DVector::from_column_slice(target),
            weight: *weight,
        },
        ObjectiveEntry::Quadratic { q, c, r } => Objective::Quadratic {
            q: matrix_from_rows(q, n, &format!("agents[{agent_idx}].objective.params.q"))?,
            c: DVector::from_column_slice(c),
            r: *r,
        },
        ObjectiveEntry::ExpSum => Objective::ExpSum,
    };
    Ok(obj)
}

fn objective_to_entry(obj: &Objective) -> ObjectiveEntry {
    match obj {
        Objective::Zero => ObjectiveEntry::Zero,
        Objective::SquaredDistance { target, weight } => ObjectiveEntry::SquaredDistance {
            target: target.iter().copied().collect(),
            weight: *weight,
        },
        Objective::Quadratic { q, c, r } => ObjectiveEntry::Quadratic {
            q: matrix_to_rows(q),
            c: c.iter().copied().collect(),
            r: *r,
        },
        Objective::ExpSum => ObjectiveEntry::ExpSum,
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], expected_cols: usize, path: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Schema {
            path: path.to_string(),
            detail: "matrix must have at least one row".to_string(),
        });
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != expected_cols {
            return Err(Error::Schema {
                path: format!("{path}[{r}]"),
                detail: format!("row has {} entries, expected {expected_cols}", row.len()),
            });
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), expected_cols, &flat))
}

fn matrix_to_rows(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..mat.nrows())
        .map(|r| (0..mat.ncols()).map(|c| mat[(r, c)]).collect())
        .collect()
}
