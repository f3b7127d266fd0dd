//! Independent centralized solver for the constrained problem. It
//! produces the ground-truth optimum used by the distance metric W and
//! by the acceptance tests, via two routes that cross-check each other:
//! an exact KKT solve for the quadratic objective class and a method of
//! multipliers with damped Newton inner solves for the general class.
//!
//! The solver works with a constraint-space multiplier `mu` on
//! `P_bar (H_bar x - b_bar) = 0`; the node-space multiplier the flows
//! use is recovered from it by least squares (`node_multiplier`).

use nalgebra::{DMatrix, DVector};

use crate::constraints::StackedSystem;
use crate::error::{Error, Result};
use crate::linalg;
use crate::objectives::{self, Objective};

/// KKT residual bound for a solution returned by `solve_quadratic_kkt`.
pub const KKT_TOL_QUADRATIC: f64 = 1e-8;
/// KKT residual bound at which the method of multipliers terminates.
pub const KKT_TOL_GENERAL: f64 = 1e-9;
/// Gradient-norm target of the inner Newton minimization.
const INNER_GRAD_TOL: f64 = 1e-10;
const MAX_OUTER_ITERATIONS: usize = 50;
const MAX_INNER_ITERATIONS: usize = 500;
const RHO_INITIAL: f64 = 10.0;
const RHO_GROWTH: f64 = 10.0;
const RHO_MAX: f64 = 1e6;

/// Centralized optimum together with its constraint-space multiplier
/// and the verified KKT residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: DVector<f64>,
    pub mu_star: DVector<f64>,
    pub kkt_residual: f64,
    pub objective_value: f64,
    pub outer_iterations: usize,
}

/// Distance metric `W = 1/2 sum_i ||x_i - x_i*||^2`.
pub fn distance_to_opt(x: &DVector<f64>, reference: &ReferenceSolution) -> Result<f64> {
    if x.len() != reference.x_star.len() {
        return Err(Error::DimensionMismatch {
            what: "state compared against reference",
            expected: reference.x_star.len(),
            found: x.len(),
        });
    }
    Ok(0.5 * (x - &reference.x_star).norm_squared())
}

/// Constant gradient data of the quadratic objective class:
/// `grad f(x) = G x + g`.
fn quadratic_gradient_data(
    objectives: &[Objective],
    n: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mn = objectives.len() * n;
    let mut g_mat = DMatrix::zeros(mn, mn);
    let mut g_vec = DVector::zeros(mn);
    for (i, obj) in objectives.iter().enumerate() {
        if !obj.is_quadratic_class() {
            return Err(Error::NonQuadraticObjective { agent: i + 1 });
        }
        let zero = DVector::zeros(n);
        let hess = obj.hessian(&zero)?;
        let grad0 = obj.gradient(&zero)?;
        g_mat.view_mut((i * n, i * n), (n, n)).copy_from(&hess);
        g_vec.rows_mut(i * n, n).copy_from(&grad0);
    }
    Ok((g_mat, g_vec))
}

/// Exact solve of the linear KKT system for the quadratic class:
/// stationarity `G x + g + (P_bar H_bar)' mu = 0` and primal
/// `P_bar H_bar x = b_bar`, by minimum-norm least squares. Rejects
/// problems whose optimum is not unique (directions that are flat for
/// the objective and free for the constraints) as `Unbounded`.
pub fn solve_quadratic_kkt(
    sys: &StackedSystem,
    objectives: &[Objective],
) -> Result<ReferenceSolution> {
    let n = sys.dimension();
    let mn = sys.agent_count() * n;
    let cn = sys.edge_count() * n;
    let (g_mat, g_vec) = quadratic_gradient_data(objectives, n)?;
    let ph = sys.p_bar() * sys.h_bar();

    let stacked = linalg::vstack(&g_mat, &ph);
    let rank = linalg::rank(&stacked);
    if rank < mn {
        return Err(Error::Unbounded {
            detail: format!(
                "optimum not unique: {} flat direction(s) unresolved by the constraints",
                mn - rank
            ),
        });
    }

    let mut kkt = DMatrix::zeros(mn + cn, mn + cn);
    kkt.view_mut((0, 0), (mn, mn)).copy_from(&g_mat);
    kkt.view_mut((0, mn), (mn, cn)).copy_from(&ph.transpose());
    kkt.view_mut((mn, 0), (cn, mn)).copy_from(&ph);
    let mut rhs = DVector::zeros(mn + cn);
    rhs.rows_mut(0, mn).copy_from(&(-&g_vec));
    rhs.rows_mut(mn, cn).copy_from(sys.b_bar());

    let sol = linalg::lstsq(&kkt, &rhs);
    let x_star = sol.rows(0, mn).into_owned();
    let mu_star = sol.rows(mn, cn).into_owned();

    let stationarity = (&g_mat * &x_star + &g_vec + ph.transpose() * &mu_star).norm();
    let primal = (&ph * &x_star - sys.b_bar()).norm();
    let kkt_residual = stationarity.max(primal);
    if kkt_residual > KKT_TOL_QUADRATIC {
        return Err(Error::Unbounded {
            detail: format!("KKT system has no solution (residual {kkt_residual:.3e})"),
        });
    }
    let objective_value = objectives::total_value(objectives, n, &x_star)?;
    Ok(ReferenceSolution {
        x_star,
        mu_star,
        kkt_residual,
        objective_value,
        outer_iterations: 0,
    })
}

/// Method of multipliers on `min f(x) s.t. P_bar (H_bar x - b_bar) = 0`.
///
/// Each outer round minimizes
/// `f(x) + mu' c(x) + rho/2 ||c(x)||^2` with `c = P_bar H_bar x - b_bar`
/// by damped Newton to gradient norm `INNER_GRAD_TOL`, then updates
/// `mu <- mu + rho c(x)` and grows `rho` tenfold up to `RHO_MAX`.
/// Terminates once the KKT residual drops below `KKT_TOL_GENERAL`,
/// otherwise reports `NoConvergence` with the attained residual.
pub fn solve_general(
    sys: &StackedSystem,
    objectives: &[Objective],
    init: &DVector<f64>,
) -> Result<ReferenceSolution> {
    let n = sys.dimension();
    let mn = sys.agent_count() * n;
    if init.len() != mn {
        return Err(Error::DimensionMismatch {
            what: "reference solver initial point",
            expected: mn,
            found: init.len(),
        });
    }
    let ph = sys.p_bar() * sys.h_bar();
    let pht_ph = ph.transpose() * &ph;

    let mut x = init.clone();
    let mut mu = DVector::zeros(sys.edge_count() * n);
    let mut rho = RHO_INITIAL;
    let mut attained = f64::INFINITY;
    let mut previous_violation = f64::INFINITY;

    for outer in 1..=MAX_OUTER_ITERATIONS {
        x = newton_inner(sys, objectives, &ph, &pht_ph, &mu, rho, x)?;
        let c = &ph * &x - sys.b_bar();
        mu += rho * &c;
        let grad = objectives::stacked_gradient(objectives, n, &x)?;
        let stationarity = (&grad + ph.transpose() * &mu).norm();
        let kkt_residual = stationarity.max(c.norm());
        attained = kkt_residual;
        if kkt_residual <= KKT_TOL_GENERAL {
            let objective_value = objectives::total_value(objectives, n, &x)?;
            return Ok(ReferenceSolution {
                x_star: x,
                mu_star: mu,
                kkt_residual,
                objective_value,
                outer_iterations: outer,
            });
        }
        // Grow the penalty only when the multiplier update alone is not
        // shrinking the violation fast enough; an oversized penalty
        // erodes the inner solve's attainable accuracy.
        if c.norm() > 0.1 * previous_violation {
            rho = (rho * RHO_GROWTH).min(RHO_MAX);
        }
        previous_violation = c.norm();
    }
    Err(Error::NoConvergence {
        kkt_residual: attained,
        iterations: MAX_OUTER_ITERATIONS,
    })
}

fn newton_inner(
    sys: &StackedSystem,
    objectives: &[Objective],
    ph: &DMatrix<f64>,
    pht_ph: &DMatrix<f64>,
    mu: &DVector<f64>,
    rho: f64,
    mut x: DVector<f64>,
) -> Result<DVector<f64>> {
    let n = sys.dimension();
    let merit = |x: &DVector<f64>| -> Result<f64> {
        let c = ph * x - sys.b_bar();
        Ok(objectives::total_value(objectives, n, x)? + mu.dot(&c) + 0.5 * rho * c.norm_squared())
    };
    for _ in 0..MAX_INNER_ITERATIONS {
        let c = ph * &x - sys.b_bar();
        let grad =
            objectives::stacked_gradient(objectives, n, &x)? + ph.transpose() * (mu + rho * &c);
        if grad.norm() <= INNER_GRAD_TOL {
            return Ok(x);
        }
        let mut hess = objectives::block_hessian(objectives, n, &x)? + rho * pht_ph;
        // Tiny ridge keeps the solve well-posed when objective blocks
        // and constraint curvature share a null space.
        let ridge = 1e-12 * (1.0 + hess.amax());
        for k in 0..hess.nrows() {
            hess[(k, k)] += ridge;
        }
        let step = linalg::lstsq(&hess, &(-&grad));
        let slope = grad.dot(&step);
        let base = merit(&x)?;
        // Near the optimum the true decrease drops below the rounding
        // level of the merit; the slack keeps full Newton steps from
        // being rejected for noise.
        let slack = 1e-12 * (1.0 + base.abs());
        let mut alpha = 1.0;
        loop {
            let candidate = &x + alpha * &step;
            if merit(&candidate)? <= base + 1e-4 * alpha * slope + slack {
                x = candidate;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                // No measurable progress in any direction.
                return Ok(x);
            }
        }
    }
    Ok(x)
}

/// Least-squares node-space multiplier: the lambda minimizing
/// `|| grad f(x) + H_bar' P_bar H_bar lambda ||`. Always attains a small
/// residual at a KKT point because the stationarity direction lies in
/// the range of `H_bar' P_bar`, which equals the range of
/// `H_bar' P_bar H_bar`.
pub fn node_multiplier(
    sys: &StackedSystem,
    objectives: &[Objective],
    x: &DVector<f64>,
) -> DVector<f64> {
    let hph = sys.h_bar().transpose() * sys.p_bar() * sys.h_bar();
    let grad = objectives::stacked_gradient(objectives, sys.dimension(), x)
        .expect("dimension checked by caller");
    linalg::lstsq(&hph, &(-grad))
}
