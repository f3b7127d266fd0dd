//! ODE integration of the flows: a classical fixed-step fourth-order
//! method and an embedded Dormand-Prince 4(5) method with step-size
//! control. Recording never interpolates: output rows snap to the first
//! accepted step at or after each record boundary, plus the final state.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Steps below this size abort adaptive integration.
pub const MIN_ADAPTIVE_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
}

/// Which run metric a threshold stop rule watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopMetric {
    /// Agreement error V.
    #[serde(rename = "V")]
    AgreementError,
    /// Norm of the full flow derivative.
    #[serde(rename = "rhs_norm")]
    RhsNorm,
    /// Distance to the reference optimum W.
    #[serde(rename = "W")]
    DistanceToOpt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    pub metric: StopMetric,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for `Rk4Fixed`, initial step for `Rk45Adaptive`.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub t_end: f64,
    pub record_every: f64,
    pub stop_on: Option<StopRule>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive,
            dt: 0.01,
            rtol: 1e-8,
            atol: 1e-10,
            t_end: 50.0,
            record_every: 0.01,
            stop_on: None,
        }
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !positive(self.dt) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !positive(self.rtol) || !positive(self.atol) {
            return Err(Error::InvalidConfig(format!(
                "tolerances must be positive, got rtol {} atol {}",
                self.rtol, self.atol
            )));
        }
        if !self.t_end.is_finite() || self.t_end < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        if !positive(self.record_every) {
            return Err(Error::InvalidConfig(format!(
                "record_every must be positive, got {}",
                self.record_every
            )));
        }
        Ok(())
    }
}

/// Recorded output of one integration.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationOutput {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

/// Predicate evaluated at accepted steps; integration ends when it fires.
pub type StopPredicate<'a> = &'a mut dyn FnMut(f64, &DVector<f64>) -> bool;

/// One classical fourth-order step.
pub fn rk4_step<F>(rhs: &mut F, t: f64, y: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    assert!(dt != 0.0, "rk4 step must be nonzero");
    let k1 = eval(rhs, t, y)?;
    let k2 = eval(rhs, t + 0.5 * dt, &(y + 0.5 * dt * &k1))?;
    let k3 = eval(rhs, t + 0.5 * dt, &(y + 0.5 * dt * &k2))?;
    let k4 = eval(rhs, t + dt, &(y + dt * &k3))?;
    Ok(y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

fn eval<F>(rhs: &mut F, t: f64, y: &DVector<f64>) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let d = rhs(t, y)?;
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDerivative { t });
    }
    Ok(d)
}

// Dormand-Prince 4(5) tableau.
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights (row 7 of A doubles as B, FSAL).
const DP_B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
// Difference between the fifth- and embedded fourth-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// Integrates `ydot = rhs(t, y)` from t = 0 to `config.t_end`.
///
/// The optional `stop` predicate is evaluated at every accepted step;
/// when it fires the integration ends there and the triggering state is
/// the final record. Errors: `NonFiniteDerivative`, and for the
/// adaptive method `StepUnderflow` when error control pushes the step
/// below `MIN_ADAPTIVE_STEP`.
pub fn integrate<F>(
    mut rhs: F,
    y0: DVector<f64>,
    config: &IntegratorConfig,
    mut stop: Option<StopPredicate>,
) -> Result<IntegrationOutput>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    config.validate()?;
    let mut out = IntegrationOutput {
        times: vec![0.0],
        states: vec![y0.clone()],
    };
    if config.t_end == 0.0 {
        return Ok(out);
    }

    let mut t = 0.0;
    let mut y = y0;
    let mut record_index: u64 = 1; // next boundary is record_index * record_every
    let mut h = config.dt.min(config.t_end);

    // FSAL cache for the adaptive method.
    let mut k_first: Option<DVector<f64>> = None;

    while t < config.t_end - 1e-12 {
        let (t_new, y_new) = match config.method {
            Method::Rk4Fixed => {
                let step = h.min(config.t_end - t);
                let y_next = rk4_step(&mut rhs, t, &y, step)?;
                if y_next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteDerivative { t });
                }
                (t + step, y_next)
            }
            Method::Rk45Adaptive => {
                let (t_next, y_next, h_next, k_last) =
                    adaptive_step(&mut rhs, t, &y, h, config, k_first.take())?;
                h = h_next;
                k_first = Some(k_last);
                (t_next, y_next)
            }
        };
        t = t_new;
        y = y_new;

        let stopped = stop.as_mut().map(|f| f(t, &y)).unwrap_or(false);
        let reached_end = t >= config.t_end - 1e-12;
        let boundary = record_index as f64 * config.record_every;
        if t + 1e-12 >= boundary || stopped || reached_end {
            out.times.push(t);
            out.states.push(y.clone());
            record_index = (t / config.record_every).floor() as u64 + 1;
        }
        if stopped {
            break;
        }
    }
    Ok(out)
}

/// Attempts Dormand-Prince steps from (t, y) until one is accepted.
/// Returns the new time, state, suggested next step, and the derivative
/// at the new state (first-same-as-last).
fn adaptive_step<F>(
    rhs: &mut F,
    t: f64,
    y: &DVector<f64>,
    h_init: f64,
    config: &IntegratorConfig,
    k_first: Option<DVector<f64>>,
) -> Result<(f64, DVector<f64>, f64, DVector<f64>)>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut h = h_init.min(config.t_end - t);
    let mut k1 = match k_first {
        Some(k) => k,
        None => eval(rhs, t, y)?,
    };
    loop {
        if h < MIN_ADAPTIVE_STEP {
            return Err(Error::StepUnderflow { t, step: h });
        }
        let mut k = Vec::with_capacity(7);
        k.push(k1.clone());
        for stage in 1..7 {
            let mut yi = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = DP_A[stage][j];
                if a != 0.0 {
                    yi += h * a * kj;
                }
            }
            k.push(eval(rhs, t + DP_C[stage] * h, &yi)?);
        }
        let mut y_new = y.clone();
        let mut err_vec = DVector::zeros(y.len());
        for (j, kj) in k.iter().enumerate() {
            if DP_B[j] != 0.0 {
                y_new += h * DP_B[j] * kj;
            }
            if DP_E[j] != 0.0 {
                err_vec += h * DP_E[j] * kj;
            }
        }
        let err = err_vec.norm();
        let tol = config.atol + config.rtol * y.norm();
        if err <= tol {
            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * (tol / err).powf(0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            let t_new = t + h;
            let h_next = (h * factor).min(config.t_end - t_new).max(0.0);
            let h_next = if h_next == 0.0 { h * factor } else { h_next };
            let k_last = k.pop().expect("seven stages");
            return Ok((t_new, y_new, h_next, k_last));
        }
        let factor = (SAFETY * (tol / err).powf(0.2)).clamp(MIN_FACTOR, 1.0);
        h *= factor;
        k1 = k.swap_remove(0);
    }
}
