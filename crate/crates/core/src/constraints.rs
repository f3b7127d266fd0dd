//! Per-edge linear constraints between neighboring agents, their
//! projected form, and the stacked block operators used by the flows.
//!
//! An edge agreement `A (x_i - x_j) = b` is stored once per listed edge;
//! the mirrored constraint for the opposite direction (same `A`, negated
//! `b`) is synthesized on demand, so pairwise consistency holds by
//! construction. Projection onto the row space of `A` turns each
//! agreement into `P (x_i - x_j - b_bar) = 0`, and stacking all edges
//! gives the single condition `P_bar (H_bar x - b_bar) = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg;

/// Entrywise tolerance for projector identities (P^2 = P, P' = P, P b_bar = b_bar).
pub const PROJECTION_TOL: f64 = 1e-12;

/// Default residual norm below which a least-squares point counts as feasible.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-8;

/// Linear agreement on edge (i, j): `a (x_i - x_j) = b`, with `a` of
/// shape d x n, full row rank. Node indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConstraint {
    pub i: usize,
    pub j: usize,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl EdgeConstraint {
    pub fn new(i: usize, j: usize, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let (d, n) = (a.nrows(), a.ncols());
        if d == 0 || d > n {
            return Err(Error::DimensionMismatch {
                what: "edge constraint rows (need 1 <= d <= n)",
                expected: n,
                found: d,
            });
        }
        if b.len() != d {
            return Err(Error::DimensionMismatch {
                what: "edge constraint right-hand side",
                expected: d,
                found: b.len(),
            });
        }
        Ok(Self { i, j, a, b })
    }

    /// The same agreement seen from the other endpoint: (j, i) with the
    /// same matrix and negated offset.
    pub fn mirror(&self) -> EdgeConstraint {
        EdgeConstraint {
            i: self.j,
            j: self.i,
            a: self.a.clone(),
            b: -&self.b,
        }
    }

    /// Projects the constraint onto the row space of `a`:
    /// `P = a' (a a')^-1 a`, `b_bar = a' (a a')^-1 b`, computed through
    /// the SVD of `a` for numerical robustness.
    pub fn project(&self) -> Result<ProjectedConstraint> {
        let (d, n) = (self.a.nrows(), self.a.ncols());
        let svd = self.a.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        let tol = linalg::rank_tolerance(d, n, sigma_max);
        let sigma_min = svd.singular_values.min();
        if sigma_max == 0.0 || sigma_min <= tol {
            return Err(Error::RankDeficient {
                rows: d,
                cols: n,
                sigma_min,
            });
        }
        // Full row rank: the thin right factor spans the row space.
        let v_t = svd.v_t.as_ref().expect("V' requested");
        let v = v_t.rows(0, d).transpose(); // n x d, orthonormal columns
        let p = &v * v.transpose();
        // b_bar = pinv(a) b = V Sigma^-1 U' b
        let u = svd.u.as_ref().expect("U requested");
        let mut ub = u.columns(0, d).transpose() * &self.b;
        for k in 0..d {
            ub[k] /= svd.singular_values[k];
        }
        let b_bar = &v * ub;
        Ok(ProjectedConstraint { p, b_bar })
    }
}

/// Projected form of one edge agreement: `p (x_i - x_j - b_bar) = 0`,
/// with `p` an orthogonal projector fixing `b_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedConstraint {
    pub p: DMatrix<f64>,
    pub b_bar: DVector<f64>,
}

/// Report of the well-configuredness rank test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WellConfiguredReport {
    pub ok: bool,
    pub rank_ph: usize,
    pub rank_hph: usize,
}

/// Result of the least-squares feasibility probe.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(DVector<f64>),
    Infeasible { residual: f64 },
}

/// Block operators for all edge agreements at once: block-diagonal
/// projector `p_bar`, stacked offsets `b_bar` (edge order), and
/// `h_bar = H (x) I_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    m: usize,
    n: usize,
    edges: Vec<(usize, usize)>,
    blocks: Vec<ProjectedConstraint>,
    p_bar: DMatrix<f64>,
    b_bar: DVector<f64>,
    h_bar: DMatrix<f64>,
}

/// Builds the stacked operators. Constraints must come one per listed
/// edge, in edge order, with the same orientation as the edge listing.
pub fn stack(graph: &Graph, constraints: &[EdgeConstraint], n: usize) -> Result<StackedSystem> {
    let edges = graph.edges();
    for (k, &(i, j)) in edges.iter().enumerate() {
        match constraints.get(k) {
            None => return Err(Error::MissingEdgeConstraint { i: i + 1, j: j + 1 }),
            Some(c) if c.i == i && c.j == j => {}
            Some(c) if c.i == j && c.j == i => {
                return Err(Error::OrientationMismatch {
                    i: i + 1,
                    j: j + 1,
                    found_i: c.i + 1,
                    found_j: c.j + 1,
                })
            }
            Some(c) => {
                return Err(Error::MissingEdgeConstraint { i: c.i + 1, j: c.j + 1 });
            }
        }
    }
    if constraints.len() > edges.len() {
        let extra = &constraints[edges.len()];
        return Err(Error::MissingEdgeConstraint {
            i: extra.i + 1,
            j: extra.j + 1,
        });
    }

    let mb = edges.len();
    let mut blocks = Vec::with_capacity(mb);
    let mut p_bar = DMatrix::zeros(mb * n, mb * n);
    let mut b_bar = DVector::zeros(mb * n);
    for (k, c) in constraints.iter().enumerate() {
        if c.a.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "edge constraint columns",
                expected: n,
                found: c.a.ncols(),
            });
        }
        let pc = c.project()?;
        p_bar.view_mut((k * n, k * n), (n, n)).copy_from(&pc.p);
        b_bar.rows_mut(k * n, n).copy_from(&pc.b_bar);
        blocks.push(pc);
    }
    let h_bar = graph
        .incidence_matrix()
        .kronecker(&DMatrix::identity(n, n));
    Ok(StackedSystem {
        m: graph.agent_count(),
        n,
        edges: edges.to_vec(),
        blocks,
        p_bar,
        b_bar,
        h_bar,
    })
}

impl StackedSystem {
    pub fn agent_count(&self) -> usize {
        self.m
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Projected constraint block of edge k, in edge order.
    pub fn block(&self, k: usize) -> &ProjectedConstraint {
        &self.blocks[k]
    }

    pub fn p_bar(&self) -> &DMatrix<f64> {
        &self.p_bar
    }

    pub fn b_bar(&self) -> &DVector<f64> {
        &self.b_bar
    }

    pub fn h_bar(&self) -> &DMatrix<f64> {
        &self.h_bar
    }

    /// Stacked agreement residual `e = p_bar (h_bar x - b_bar)`; zero
    /// exactly when every edge agreement holds.
    pub fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.m * self.n {
            return Err(Error::DimensionMismatch {
                what: "stacked state",
                expected: self.m * self.n,
                found: x.len(),
            });
        }
        let r = &self.h_bar * x - &self.b_bar;
        Ok(&self.p_bar * r)
    }

    /// Rank test for well-configuredness: the node-space image of the
    /// residual vanishing must force the residual itself to vanish,
    /// which holds exactly when rank(H_bar' P_bar H_bar) = rank(P_bar H_bar).
    pub fn well_configured(&self) -> WellConfiguredReport {
        let ph = &self.p_bar * &self.h_bar;
        let hph = self.h_bar.transpose() * &ph;
        let rank_ph = linalg::rank(&ph);
        let rank_hph = linalg::rank(&hph);
        WellConfiguredReport {
            ok: rank_ph == rank_hph,
            rank_ph,
            rank_hph,
        }
    }

    /// Least-squares probe for a point satisfying all agreements.
    /// Returns the minimizer of `|| p_bar (h_bar x - b_bar) ||` when its
    /// residual is at most `tol`, otherwise the attained residual.
    pub fn feasible_point(&self, tol: f64) -> Feasibility {
        let ph = &self.p_bar * &self.h_bar;
        // p_bar b_bar = b_bar, so the target is b_bar itself.
        let x = linalg::lstsq(&ph, &self.b_bar);
        let res = (&ph * &x - &self.b_bar).norm();
        if res <= tol {
            Feasibility::Feasible(x)
        } else {
            Feasibility::Infeasible { residual: res }
        }
    }
}

/// Agreement error `V = 1/2 sum ||A_ij (x_i - x_j) - b_ij||^2` over the
/// original (unprojected) constraints; nonnegative, zero exactly on the
/// agreement set.
pub fn agreement_error(constraints: &[EdgeConstraint], n: usize, x: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for c in constraints {
        let xi = x.rows(c.i * n, n);
        let xj = x.rows(c.j * n, n);
        let gap = &c.a * (xi - xj) - &c.b;
        total += gap.norm_squared();
    }
    0.5 * total
}
