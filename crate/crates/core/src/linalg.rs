//! Small dense linear-algebra helpers: numerical rank, least squares,
//! symmetric eigenvalues. All tolerances follow the standard convention
//! sigma <= max(rows, cols) * eps * sigma_max treated as zero.

use nalgebra::{DMatrix, DVector};

/// Threshold below which a singular value counts as zero.
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Numerical rank by singular values.
pub fn rank(mat: &DMatrix<f64>) -> usize {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return 0;
    }
    let svd = mat.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return 0;
    }
    let tol = rank_tolerance(mat.nrows(), mat.ncols(), sigma_max);
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// Minimum-norm least-squares solution of `a x = b` via SVD.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    assert_eq!(a.nrows(), b.len(), "lstsq: rhs length");
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return DVector::zeros(a.ncols());
    }
    let eps = rank_tolerance(a.nrows(), a.ncols(), sigma_max);
    let sol = svd.solve(b, eps).expect("SVD with U and V computed");
    DVector::from_column_slice(sol.as_slice())
}

/// Eigenvalues of a symmetric matrix, sorted ascending.
pub fn symmetric_eigenvalues(mat: &DMatrix<f64>) -> Vec<f64> {
    assert_eq!(mat.nrows(), mat.ncols(), "symmetric_eigenvalues: square");
    if mat.nrows() == 0 {
        return Vec::new();
    }
    let mut vals: Vec<f64> = mat
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Stack two matrices with equal column counts on top of each other.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(top.ncols(), bottom.ncols(), "vstack: column counts");
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), (top.nrows(), top.ncols())).copy_from(top);
    out.view_mut((top.nrows(), 0), (bottom.nrows(), bottom.ncols()))
        .copy_from(bottom);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_identity_and_singular() {
        assert_eq!(rank(&DMatrix::identity(3, 3)), 3);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(rank(&singular), 1);
        assert_eq!(rank(&DMatrix::zeros(2, 3)), 0);
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x_true = DVector::from_vec(vec![2.0, -1.0]);
        let b = &a * &x_true;
        let x = lstsq(&a, &b);
        assert!((x - x_true).norm() < 1e-12);
    }

    #[test]
    fn lstsq_minimum_norm_on_rank_deficient_system() {
        // x1 + x2 = 2 has the least-norm solution (1, 1).
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0]);
        let x = lstsq(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_sorted() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -1.0]);
        let ev = symmetric_eigenvalues(&m);
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12);
    }
}
