//! Command-line runner for edge-agreement scenarios.
//!
//! Exit codes: 0 success, 1 validation failure (including parse/schema
//! problems in the scenario file), 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use edgeflow::harness::{self, Mode, RunSummary, Trajectory};
use edgeflow::scenario::{self, scenario_hash};
use edgeflow::{Error, Feasibility, Objective, Scenario};

#[derive(Parser)]
#[command(name = "edgeflow", version, about = "Distributed optimization under edge agreements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a scenario file and print per-check evidence.
    Check { file: PathBuf },
    /// Run a scenario, writing trajectory.csv and summary.json.
    Run {
        file: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the integration horizon.
        #[arg(long = "t-end")]
        t_end: Option<f64>,
    },
    /// Solve the scenario centrally and write reference.json.
    Reference {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Check { file } => cmd_check(&file),
        Command::Run { file, out, seed, t_end } => cmd_run(&file, &out, seed, t_end),
        Command::Reference { file, out } => cmd_reference(&file, &out),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}

fn classify(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::Schema { .. }
        | Error::ValidationFailed { .. }
        | Error::SelfLoop { .. }
        | Error::DuplicateEdge { .. }
        | Error::NodeIndexOutOfRange { .. }
        | Error::RankDeficient { .. }
        | Error::MissingEdgeConstraint { .. }
        | Error::OrientationMismatch { .. }
        | Error::DimensionMismatch { .. }
        | Error::InvalidConfig(_) => 1,
        _ => 2,
    }
}

fn cmd_check(file: &Path) -> Result<ExitCode, Error> {
    let scenario = scenario::parse_scenario(file)?;
    let report = harness::validate(&scenario);
    for check in &report.checks {
        let verdict = if check.passed { "pass" } else { "fail" };
        println!("{}: {} ({})", check.name, verdict, check.detail);
    }
    let named = ["rank", "consistency", "connectivity", "well_configured", "feasibility"];
    for name in named {
        if !report.checks.iter().any(|c| c.name.to_string() == name) {
            println!("{name}: skipped (earlier check failed)");
        }
    }
    for warning in &report.warnings {
        println!("warning: {warning}");
    }
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    #[serde(rename = "final_V")]
    final_v: f64,
    #[serde(rename = "final_W", skip_serializing_if = "Option::is_none")]
    final_w: Option<f64>,
    final_rhs_norm: f64,
    fitted_rate: Option<f64>,
    fit_r_squared: Option<f64>,
    locality_ok: bool,
    wall_time: f64,
    seed: Option<u64>,
    notes: &'a [String],
    scenario_hash: String,
    tool_version: &'static str,
}

fn cmd_run(
    file: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    t_end: Option<f64>,
) -> Result<ExitCode, Error> {
    let mut scenario = scenario::load_scenario(file)?;
    if let Some(seed) = seed {
        scenario.init = match scenario.init {
            harness::Init::UniformRandom { low, high, .. } => {
                harness::Init::UniformRandom { low, high, seed }
            }
            harness::Init::Explicit { .. } => {
                return Err(Error::InvalidConfig(
                    "--seed cannot override an explicit initial state".to_string(),
                ))
            }
        };
    }
    if let Some(t_end) = t_end {
        scenario.integrator.t_end = t_end;
    }

    let (trajectory, summary) = harness::run(&scenario)?;
    std::fs::create_dir_all(out_dir)?;
    write_trajectory_csv(&out_dir.join("trajectory.csv"), &scenario, &trajectory)?;

    let document = SummaryDocument {
        final_v: summary.final_v,
        final_w: summary.final_w,
        final_rhs_norm: summary.final_rhs_norm,
        fitted_rate: summary.fitted_rate,
        fit_r_squared: summary.fit_r_squared,
        locality_ok: summary.locality_ok,
        wall_time: summary.wall_time,
        seed: summary.seed,
        notes: &summary.notes,
        scenario_hash: scenario_hash(&scenario),
        tool_version: env!("CARGO_PKG_VERSION"),
    };
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&document).expect("summary serializes") + "\n",
    )?;
    print_summary(&summary);
    Ok(ExitCode::SUCCESS)
}

fn print_summary(summary: &RunSummary) {
    println!("final_V = {:.6e}", summary.final_v);
    if let Some(w) = summary.final_w {
        println!("final_W = {w:.6e}");
    }
    println!("final_rhs_norm = {:.6e}", summary.final_rhs_norm);
    match (summary.fitted_rate, summary.fit_r_squared) {
        (Some(rate), Some(r2)) => println!("fitted_rate = {rate:.6} (r^2 = {r2:.6})"),
        _ => println!("fitted_rate = n/a (insufficient usable samples)"),
    }
    println!("locality_ok = {}", summary.locality_ok);
    println!("wall_time = {:.3}s", summary.wall_time);
    for note in &summary.notes {
        println!("note: {note}");
    }
}

/// Writes `t,x_1_1,...,x_m_n,lambda_1_1,...,lambda_m_n,V[,W]` with 17
/// significant digits so values parse back exactly. The W column exists
/// only when a reference solution does.
fn write_trajectory_csv(
    path: &Path,
    scenario: &Scenario,
    trajectory: &Trajectory,
) -> Result<(), Error> {
    let m = scenario.graph.agent_count();
    let n = scenario.n;
    let mut header = String::from("t");
    for i in 1..=m {
        for k in 1..=n {
            header.push_str(&format!(",x_{i}_{k}"));
        }
    }
    for i in 1..=m {
        for k in 1..=n {
            header.push_str(&format!(",lambda_{i}_{k}"));
        }
    }
    header.push_str(",V");
    let with_w = trajectory.distance_to_opt.is_some();
    if with_w {
        header.push_str(",W");
    }
    let mut body = header;
    body.push('\n');
    for (idx, state) in trajectory.states.iter().enumerate() {
        body.push_str(&fmt(state.t));
        for v in state.x.iter().chain(state.lambda.iter()) {
            body.push(',');
            body.push_str(&fmt(*v));
        }
        body.push(',');
        body.push_str(&fmt(trajectory.agreement[idx]));
        if let Some(w) = &trajectory.distance_to_opt {
            body.push(',');
            body.push_str(&fmt(w[idx]));
        }
        body.push('\n');
    }
    std::fs::write(path, body)?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct ReferenceDocument {
    x_star: Vec<f64>,
    mu_star: Vec<f64>,
    kkt_residual: f64,
    objective_value: f64,
}

fn cmd_reference(file: &Path, out_dir: &Path) -> Result<ExitCode, Error> {
    let scenario = scenario::load_scenario(file)?;
    if scenario.mode != Mode::SaddlePoint {
        return Err(Error::InvalidConfig(
            "reference solving applies to saddle_point scenarios".to_string(),
        ));
    }
    let sys = edgeflow::stack(&scenario.graph, &scenario.constraints, scenario.n)?;
    let all_quadratic = scenario.objectives.iter().all(Objective::is_quadratic_class);
    let solution = if all_quadratic {
        edgeflow::solve_quadratic_kkt(&sys, &scenario.objectives)?
    } else {
        let init = match sys.feasible_point(edgeflow::constraints::DEFAULT_FEASIBILITY_TOL) {
            Feasibility::Feasible(x) => x,
            Feasibility::Infeasible { .. } => {
                nalgebra::DVector::zeros(scenario.graph.agent_count() * scenario.n)
            }
        };
        edgeflow::solve_general(&sys, &scenario.objectives, &init)?
    };
    std::fs::create_dir_all(out_dir)?;
    let document = ReferenceDocument {
        x_star: solution.x_star.iter().copied().collect(),
        mu_star: solution.mu_star.iter().copied().collect(),
        kkt_residual: solution.kkt_residual,
        objective_value: solution.objective_value,
    };
    std::fs::write(
        out_dir.join("reference.json"),
        serde_json::to_string_pretty(&document).expect("reference serializes") + "\n",
    )?;
    println!(
        "kkt_residual = {:.6e}, objective_value = {:.12}",
        solution.kkt_residual, solution.objective_value
    );
    Ok(ExitCode::SUCCESS)
}
