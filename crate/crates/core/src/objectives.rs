//! Per-agent convex objectives with analytic value, gradient, and
//! Hessian, plus a central-difference gradient validator.
//!
//! The variant set is closed so gradients and Hessians stay analytic
//! and the centralized reference solve stays exact. Extending it means
//! adding a variant here and to the scenario schema; the four built-ins
//! cover constant, quadratic, and exponential-sum objectives.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalue floor below which a quadratic form is rejected as not
/// positive semidefinite.
pub const PSD_TOL: f64 = -1e-10;

/// Convex, continuously differentiable objective of a single agent.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Constant zero; reduces the problem to agreements only.
    Zero,
    /// `weight * ||x - target||^2`.
    SquaredDistance { target: DVector<f64>, weight: f64 },
    /// `x' q x + c' x + r` with `q` symmetric positive semidefinite.
    Quadratic {
        q: DMatrix<f64>,
        c: DVector<f64>,
        r: f64,
    },
    /// `sum_k exp(x[k])`.
    ExpSum,
}

impl Objective {
    /// Dimension pinned by the variant's own data, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Objective::Zero | Objective::ExpSum => None,
            Objective::SquaredDistance { target, .. } => Some(target.len()),
            Objective::Quadratic { c, .. } => Some(c.len()),
        }
    }

    /// True for the variants whose gradient is affine, i.e. the class
    /// the exact KKT reference solve accepts.
    pub fn is_quadratic_class(&self) -> bool {
        !matches!(self, Objective::ExpSum)
    }

    /// Shape and convexity checks against the per-agent dimension `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != n {
                return Err(Error::DimensionMismatch {
                    what: "objective data",
                    expected: n,
                    found: d,
                });
            }
        }
        match self {
            Objective::SquaredDistance { weight, .. } => {
                let ok = weight.is_finite() && *weight > 0.0;
                if !ok {
                    return Err(Error::InvalidConfig(format!(
                        "squared-distance weight must be positive, got {weight}"
                    )));
                }
            }
            Objective::Quadratic { q, c, .. } => {
                if q.nrows() != n || q.ncols() != n {
                    return Err(Error::DimensionMismatch {
                        what: "quadratic matrix",
                        expected: n,
                        found: q.nrows().max(q.ncols()),
                    });
                }
                let asym = (q - q.transpose()).amax();
                if asym > 1e-12 * (1.0 + q.amax()) {
                    return Err(Error::InvalidConfig(format!(
                        "quadratic matrix not symmetric (max asymmetry {asym:.3e})"
                    )));
                }
                if c.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: "quadratic linear term",
                        expected: n,
                        found: c.len(),
                    });
                }
                let min_eig = linalg::symmetric_eigenvalues(q)
                    .first()
                    .copied()
                    .unwrap_or(0.0);
                if min_eig < PSD_TOL {
                    return Err(Error::InvalidConfig(format!(
                        "quadratic matrix not positive semidefinite (min eigenvalue {min_eig:.3e})"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != x.len() {
                return Err(Error::DimensionMismatch {
                    what: "objective argument",
                    expected: d,
                    found: x.len(),
                });
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            Objective::Zero => 0.0,
            Objective::SquaredDistance { target, weight } => weight * (x - target).norm_squared(),
            Objective::Quadratic { q, c, r } => (x.transpose() * q * x)[0] + c.dot(x) + r,
            Objective::ExpSum => x.iter().map(|v| v.exp()).sum(),
        })
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(match self {
            Objective::Zero => DVector::zeros(x.len()),
            Objective::SquaredDistance { target, weight } => 2.0 * *weight * (x - target),
            Objective::Quadratic { q, c, .. } => 2.0 * (q * x) + c,
            Objective::ExpSum => x.map(|v| v.exp()),
        })
    }

    pub fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let n = x.len();
        Ok(match self {
            Objective::Zero => DMatrix::zeros(n, n),
            Objective::SquaredDistance { weight, .. } => DMatrix::identity(n, n) * (2.0 * weight),
            Objective::Quadratic { q, .. } => 2.0 * q,
            Objective::ExpSum => DMatrix::from_diagonal(&x.map(|v| v.exp())),
        })
    }

    /// Maximum relative error between the analytic gradient and a
    /// central-difference estimate with step `h`. Each coordinate error
    /// is scaled by max(1, |analytic coordinate|).
    pub fn fd_check(&self, x: &DVector<f64>, h: f64) -> Result<f64> {
        assert!(h > 0.0, "finite-difference step must be positive");
        let grad = self.gradient(x)?;
        let mut worst = 0.0f64;
        let mut probe = x.clone();
        for k in 0..x.len() {
            probe[k] = x[k] + h;
            let plus = self.value(&probe)?;
            probe[k] = x[k] - h;
            let minus = self.value(&probe)?;
            probe[k] = x[k];
            let fd = (plus - minus) / (2.0 * h);
            let err = (grad[k] - fd).abs() / grad[k].abs().max(1.0);
            worst = worst.max(err);
        }
        Ok(worst)
    }
}

/// Global objective value `f(x) = sum_i f_i(x_i)` on a stacked state.
pub fn total_value(objectives: &[Objective], n: usize, x: &DVector<f64>) -> Result<f64> {
    check_stacked(objectives, n, x)?;
    let mut total = 0.0;
    for (i, obj) in objectives.iter().enumerate() {
        total += obj.value(&x.rows(i * n, n).into_owned())?;
    }
    Ok(total)
}

/// Stacked gradient of the global objective.
pub fn stacked_gradient(
    objectives: &[Objective],
    n: usize,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_stacked(objectives, n, x)?;
    let mut grad = DVector::zeros(x.len());
    for (i, obj) in objectives.iter().enumerate() {
        let gi = obj.gradient(&x.rows(i * n, n).into_owned())?;
        grad.rows_mut(i * n, n).copy_from(&gi);
    }
    Ok(grad)
}

/// Block-diagonal Hessian of the global objective.
pub fn block_hessian(
    objectives: &[Objective],
    n: usize,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_stacked(objectives, n, x)?;
    let mut hess = DMatrix::zeros(x.len(), x.len());
    for (i, obj) in objectives.iter().enumerate() {
        let hi = obj.hessian(&x.rows(i * n, n).into_owned())?;
        hess.view_mut((i * n, i * n), (n, n)).copy_from(&hi);
    }
    Ok(hess)
}

fn check_stacked(objectives: &[Objective], n: usize, x: &DVector<f64>) -> Result<()> {
    if x.len() != objectives.len() * n {
        return Err(Error::DimensionMismatch {
            what: "stacked objective argument",
            expected: objectives.len() * n,
            found: x.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sample_variants(n: usize, rng: &mut ChaCha8Rng) -> Vec<Objective> {
        let spd = {
            let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            &r.transpose() * &r + DMatrix::identity(n, n) * 0.1
        };
        vec![
            Objective::Zero,
            Objective::SquaredDistance {
                target: DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0)),
                weight: 1.5,
            },
            Objective::Quadratic {
                q: spd,
                c: DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
                r: 0.7,
            },
            Objective::ExpSum,
        ]
    }

    #[test]
    fn value_examples() {
        let sq = Objective::SquaredDistance {
            target: DVector::from_vec(vec![2.0, 2.0]),
            weight: 1.0,
        };
        assert_eq!(sq.value(&DVector::from_vec(vec![2.0, 2.0])).unwrap(), 0.0);
        assert_eq!(
            Objective::Zero.value(&DVector::from_vec(vec![4.2, -1.0])).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            Objective::ExpSum.value(&DVector::zeros(2)).unwrap(),
            2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn gradient_examples() {
        let sq = Objective::SquaredDistance {
            target: DVector::zeros(2),
            weight: 1.0,
        };
        assert_eq!(
            sq.gradient(&DVector::from_vec(vec![1.0, 2.0])).unwrap(),
            DVector::from_vec(vec![2.0, 4.0])
        );
        let g = Objective::ExpSum
            .gradient(&DVector::from_vec(vec![0.0, 1.0]))
            .unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 1.0f64.exp(), epsilon = 1e-15);
        let quad = Objective::Quadratic {
            q: DMatrix::identity(2, 2),
            c: DVector::zeros(2),
            r: 0.0,
        };
        let x = DVector::from_vec(vec![3.0, -1.0]);
        assert_eq!(quad.gradient(&x).unwrap(), 2.0 * &x);
    }

    #[test]
    fn hessian_examples() {
        assert_eq!(
            Objective::ExpSum.hessian(&DVector::zeros(2)).unwrap(),
            DMatrix::identity(2, 2)
        );
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let quad = Objective::Quadratic {
            q: q.clone(),
            c: DVector::zeros(2),
            r: 0.0,
        };
        assert_eq!(quad.hessian(&DVector::zeros(2)).unwrap(), 2.0 * q);
        assert_eq!(
            Objective::Zero.hessian(&DVector::zeros(3)).unwrap(),
            DMatrix::zeros(3, 3)
        );
    }

    #[test]
    fn dimension_mismatch_detected() {
        let sq = Objective::SquaredDistance {
            target: DVector::zeros(2),
            weight: 1.0,
        };
        assert!(matches!(
            sq.value(&DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            sq.gradient(&DVector::zeros(1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn central_differences_confirm_every_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1usize, 2, 4] {
            for obj in sample_variants(n, &mut rng) {
                for _ in 0..100 {
                    let x = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
                    assert!(obj.fd_check(&x, 1e-6).unwrap() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn fd_check_exact_for_zero_and_tight_for_quadratics() {
        let x = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(Objective::Zero.fd_check(&x, 1e-6).unwrap(), 0.0);
        let quad = Objective::Quadratic {
            q: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]),
            c: DVector::from_vec(vec![0.3, -0.4]),
            r: 1.0,
        };
        // Central differences are exact on quadratics up to rounding.
        assert!(quad.fd_check(&x, 1e-6).unwrap() <= 1e-9);
    }

    #[test]
    fn convexity_spot_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for obj in sample_variants(3, &mut rng) {
            for _ in 0..50 {
                let x = DVector::from_fn(3, |_, _| rng.random_range(-4.0..4.0));
                let y = DVector::from_fn(3, |_, _| rng.random_range(-4.0..4.0));
                let alpha: f64 = rng.random_range(0.0..1.0);
                let mix = alpha * &x + (1.0 - alpha) * &y;
                let lhs = obj.value(&mix).unwrap();
                let rhs = alpha * obj.value(&x).unwrap() + (1.0 - alpha) * obj.value(&y).unwrap();
                assert!(lhs <= rhs + 1e-10, "convexity violated: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn total_value_matches_agentwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 2;
        let objs = sample_variants(n, &mut rng);
        let x = DVector::from_fn(objs.len() * n, |_, _| rng.random_range(-3.0..3.0));
        let by_parts: f64 = objs
            .iter()
            .enumerate()
            .map(|(i, o)| o.value(&x.rows(i * n, n).into_owned()).unwrap())
            .sum();
        assert_abs_diff_eq!(
            total_value(&objs, n, &x).unwrap(),
            by_parts,
            epsilon = 1e-15
        );
    }

    #[test]
    fn validate_rejects_asymmetric_and_indefinite_quadratics() {
        let asym = Objective::Quadratic {
            q: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            c: DVector::zeros(2),
            r: 0.0,
        };
        assert!(asym.validate(2).is_err());
        let indefinite = Objective::Quadratic {
            q: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            c: DVector::zeros(2),
            r: 0.0,
        };
        assert!(indefinite.validate(2).is_err());
    }
}
