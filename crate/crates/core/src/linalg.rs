//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Largest absolute eigenvalue of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Largest singular value (the operator 2-norm).
pub fn max_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Result of solving a symmetric positive semi-definite system.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    /// True when Cholesky failed and the minimum-norm pseudo-inverse was used.
    pub pseudo_inverse: bool,
}

/// Solves `a x = b` for symmetric PSD `a`, falling back to the minimum-norm
/// least-squares solution when `a` is singular.
pub fn solve_psd(a: &DMatrix<f64>, b: &DVector<f64>) -> Solution {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Solution { x, pseudo_inverse: false };
        }
    }
    Solution {
        x: pinv_solve(a, b),
        pseudo_inverse: true,
    }
}

/// Minimum-norm least-squares solution via SVD.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_of_rotation_and_diagonal() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        assert!((spectral_radius(&rot) - 2.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -3.0, 1.0]));
        assert!((spectral_radius(&d) - 3.0).abs() < 1e-12);
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn singular_value_of_shear_exceeds_radius() {
        let shear = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!((spectral_radius(&shear) - 1.0).abs() < 1e-8);
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((max_singular_value(&shear) - golden).abs() < 1e-12);
    }

    #[test]
    fn singular_system_uses_min_norm() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let s = solve_psd(&a, &b);
        assert!(s.pseudo_inverse);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }
}
