//! Small dense helpers shared by the solver, operator and estimator modules.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) fn norm2(x: &[f64]) -> f64 {
    // Scaled accumulation keeps residuals near 1e-160 from underflowing.
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let sum: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * libm::sqrt(sum)
}

pub(crate) fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

pub(crate) fn frobenius(m: &DMatrix<f64>) -> f64 {
    norm2(m.as_slice())
}

/// `||M - M^T||_F / max(||M||_F, tiny)`; zero for the zero matrix.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let denom = frobenius(m).max(f64::MIN_POSITIVE);
    frobenius(&(m - m.transpose())) / denom
}

/// Rejects non-square input and asymmetry above `tol * max(1, ||M||_F)`.
pub(crate) fn ensure_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let defect = frobenius(&(m - m.transpose()));
    let scale = frobenius(m).max(1.0);
    if defect > tol * scale {
        return Err(Error::NotSymmetric {
            defect: defect / frobenius(m).max(f64::MIN_POSITIVE),
        });
    }
    Ok(())
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Extreme eigenvalues of a symmetric matrix.
pub(crate) fn eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = m.clone().symmetric_eigen();
    let lo = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Minimum-norm solution of `min ||A x - b||` through the SVD, discarding
/// singular values below `rel_cutoff * sigma_max`.
pub(crate) fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rel_cutoff: f64) -> DVector<f64> {
    let cols = a.ncols();
    if cols == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let mut x = DVector::zeros(cols);
    if sigma_max == 0.0 || !sigma_max.is_finite() {
        return x;
    }
    let threshold = rel_cutoff * sigma_max;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > threshold {
            let coeff = u.column(i).dot(b) / s;
            x += v_t.row(i).transpose() * coeff;
        }
    }
    x
}

/// Numerical rank with the conventional `max(m, n) * eps * sigma_max` cutoff.
pub(crate) fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let tol = sigma_max * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    sv.iter().filter(|&&s| s > tol).count()
}

pub(crate) fn axpy_combination<V: AsRef<[f64]>>(coeffs: &[f64], vectors: &[V]) -> Vec<f64> {
    let dim = vectors.first().map(|v| v.as_ref().len()).unwrap_or(0);
    let mut out = alloc::vec![0.0; dim];
    for (c, v) in coeffs.iter().zip(vectors) {
        for (o, x) in out.iter_mut().zip(v.as_ref()) {
            *o += c * x;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm2_matches_naive_and_survives_tiny_values() {
        assert_eq!(norm2(&[3.0, 4.0]), 5.0);
        let tiny = [3e-170, 4e-170];
        assert!((norm2(&tiny) / 5e-170 - 1.0).abs() < 1e-14);
        assert_eq!(norm2(&[]), 0.0);
    }

    #[test]
    fn min_norm_lstsq_rank_deficient() {
        // Two identical columns: minimum-norm solution splits evenly.
        let a = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let b = DVector::from_column_slice(&[2.0, 0.0]);
        let x = min_norm_lstsq(&a, &b, 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetry_of_shift_matrix() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!((relative_asymmetry(&j) - libm::sqrt(2.0)).abs() < 1e-15);
        assert_eq!(relative_asymmetry(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn rank_detects_deficiency() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(numerical_rank(&a), 1);
    }
}
