//! Linear symmetric test operators `q(x) = W x + a`.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::anderson::FixedPointOperator;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, ensure_symmetric, symmetrize};
use crate::rng::SplitMix64;
use crate::theory::{spectrum_of, SpectrumSummary};

/// `q(x) = W x + a` with `W` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSymmetricOperator {
    w: DMatrix<f64>,
    offset: DVector<f64>,
}

impl LinearSymmetricOperator {
    /// Checks `||W - W^T||_F <= 1e-12 max(1, ||W||_F)` and matching sizes.
    pub fn new(w: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        ensure_symmetric(&w, 1e-12)?;
        if offset.len() != w.nrows() {
            return Err(Error::DimensionMismatch {
                expected: w.nrows(),
                found: offset.len(),
            });
        }
        if !all_finite(w.as_slice()) || !all_finite(offset.as_slice()) {
            return Err(Error::Invalid("operator entries must be finite"));
        }
        Ok(Self { w, offset })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn spectrum(&self) -> Result<SpectrumSummary> {
        spectrum_of(&self.w)
    }

    /// True when every eigenvalue lies strictly inside `(-1, 1)`.
    pub fn is_contractive(&self) -> bool {
        let (lo, hi) = crate::linalg::eig_extremes(&self.w);
        lo > -1.0 && hi < 1.0
    }

    /// `x* = (I - W)^-1 a`.
    pub fn fixed_point(&self) -> Result<Vec<f64>> {
        fixed_point_of(&self.w, &self.offset)
    }

    /// The operator `beta W + (1 - beta) I` with offset `beta a`, which damped
    /// AA on `self` reproduces exactly.
    pub fn blended(&self, beta: f64) -> Self {
        let n = self.w.nrows();
        Self {
            w: &self.w * beta + DMatrix::identity(n, n) * (1.0 - beta),
            offset: &self.offset * beta,
        }
    }

    pub fn residual_map(&self) -> DMatrix<f64> {
        let n = self.w.nrows();
        &self.w - DMatrix::identity(n, n)
    }
}

pub(crate) fn fixed_point_of(w: &DMatrix<f64>, a: &DVector<f64>) -> Result<Vec<f64>> {
    let n = w.nrows();
    let system = DMatrix::identity(n, n) - w;
    let lu = system.lu();
    // Singular I - W has a zero pivot; tiny pivots also mean no usable x*.
    let u = lu.u();
    let max_pivot = (0..n).map(|i| u[(i, i)].abs()).fold(0.0_f64, f64::max);
    let min_pivot = (0..n)
        .map(|i| u[(i, i)].abs())
        .fold(f64::INFINITY, f64::min);
    if n > 0 && (max_pivot == 0.0 || min_pivot <= 1e-14 * max_pivot) {
        return Err(Error::NotContractive);
    }
    let x = lu.solve(a).ok_or(Error::NotContractive)?;
    Ok(x.iter().cloned().collect())
}

impl FixedPointOperator for LinearSymmetricOperator {
    fn dimension(&self) -> usize {
        self.w.nrows()
    }

    fn evaluate(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.w.nrows();
        if x.len() != n || out.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        out.copy_from_slice(self.offset.as_slice());
        // Column-major accumulation: out += sum_j x_j W[:, j].
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (o, wij) in out.iter_mut().zip(self.w.column(j).iter()) {
                    *o += wij * xj;
                }
            }
        }
        Ok(())
    }
}

/// `W = Diag(diagonal)`, `q(x) = W x + a`.
pub fn make_diag_operator(diagonal: &[f64], offset: &[f64]) -> Result<LinearSymmetricOperator> {
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(diagonal));
    LinearSymmetricOperator::new(w, DVector::from_column_slice(offset))
}

/// `W = Q Lambda Q^T` with seeded eigenvalues and a seeded orthogonal `Q`.
///
/// Draw order from `SplitMix64::new(seed)`: first the eigenvalues (uniform on
/// `[eig_low, eig_high)`; `n - 1` of them when `forced_min_eig` is given, which
/// then fills the last slot), then an `n x n` standard-normal matrix in
/// column-major order. `Q` is its QR factor with columns flipped so that `R`
/// has a non-negative diagonal. The offset is zero.
pub fn make_random_symmetric(
    n: usize,
    eig_low: f64,
    eig_high: f64,
    forced_min_eig: Option<f64>,
    seed: u64,
) -> Result<LinearSymmetricOperator> {
    if n == 0 {
        return Err(Error::Invalid("dimension must be positive"));
    }
    if !(eig_low > -1.0 && eig_low <= eig_high && eig_high < 1.0) {
        return Err(Error::BadSpectrum);
    }
    if let Some(f) = forced_min_eig {
        if !(f > -1.0 && f <= eig_low) {
            return Err(Error::BadSpectrum);
        }
    }
    let mut rng = SplitMix64::new(seed);
    let random_count = if forced_min_eig.is_some() { n - 1 } else { n };
    let mut eigenvalues: Vec<f64> = (0..random_count)
        .map(|_| rng.uniform_range(eig_low, eig_high))
        .collect();
    if let Some(f) = forced_min_eig {
        eigenvalues.push(f);
    }
    let q = random_orthogonal(n, &mut rng);
    let lambda = DMatrix::from_diagonal(&DVector::from_vec(eigenvalues));
    let w = symmetrize(&(&q * lambda * q.transpose()));
    LinearSymmetricOperator::new(w, DVector::zeros(n))
}

pub(crate) fn random_orthogonal(n: usize, rng: &mut SplitMix64) -> DMatrix<f64> {
    let g = DMatrix::from_column_slice(n, n, &rng.normal_vec(n * n));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_diagonal_operator() {
        let op = make_diag_operator(&[0.0], &[0.0]).unwrap();
        let mut out = [1.0];
        op.evaluate(&[5.0], &mut out).unwrap();
        assert_eq!(out, [0.0]);
        assert_eq!(op.fixed_point().unwrap(), alloc::vec![0.0]);
    }

    #[test]
    fn w1_spectrum() {
        let op = make_diag_operator(&[-0.07, 0.62, -0.55, -0.6, 0.15], &[0.0; 5]).unwrap();
        let s = op.spectrum().unwrap();
        assert!((s.lambda_min + 0.6).abs() < 1e-15);
        assert!((s.lambda_max - 0.62).abs() < 1e-15);
        assert!((s.op_norm - 0.62).abs() < 1e-15);
    }

    #[test]
    fn offset_and_fixed_point() {
        let op = make_diag_operator(&[0.5, -0.5], &[1.0, 3.0]).unwrap();
        let xs = op.fixed_point().unwrap();
        assert!((xs[0] - 2.0).abs() < 1e-14 && (xs[1] - 2.0).abs() < 1e-14);
        let mut out = [0.0; 2];
        op.evaluate(&xs, &mut out).unwrap();
        assert!((out[0] - xs[0]).abs() < 1e-14 && (out[1] - xs[1]).abs() < 1e-14);
    }

    #[test]
    fn identity_is_not_contractive() {
        let op = make_diag_operator(&[1.0, 0.2], &[0.0, 0.0]).unwrap();
        assert_eq!(op.fixed_point(), Err(Error::NotContractive));
        assert!(!op.is_contractive());
    }

    #[test]
    fn rejects_asymmetric_matrix() {
        let w = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.0, 0.1]);
        assert!(LinearSymmetricOperator::new(w, DVector::zeros(2)).is_err());
    }

    #[test]
    fn random_symmetric_scalar() {
        let op = make_random_symmetric(1, 0.3, 0.3, None, 99).unwrap();
        assert!((op.matrix()[(0, 0)] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn random_symmetric_bad_ranges() {
        assert_eq!(
            make_random_symmetric(3, 0.5, 0.2, None, 1),
            Err(Error::BadSpectrum)
        );
        assert_eq!(
            make_random_symmetric(3, -1.0, 0.2, None, 1),
            Err(Error::BadSpectrum)
        );
        assert_eq!(
            make_random_symmetric(3, -0.5, 0.2, Some(-0.4), 1),
            Err(Error::BadSpectrum)
        );
        assert_eq!(
            make_random_symmetric(3, -0.5, 0.2, Some(-1.0), 1),
            Err(Error::BadSpectrum)
        );
    }

    #[test]
    fn random_symmetric_is_deterministic() {
        let a = make_random_symmetric(30, -0.9, 0.9, Some(-0.95), 5).unwrap();
        let b = make_random_symmetric(30, -0.9, 0.9, Some(-0.95), 5).unwrap();
        assert_eq!(a.matrix().as_slice(), b.matrix().as_slice());
        let c = make_random_symmetric(30, -0.9, 0.9, Some(-0.95), 6).unwrap();
        assert_ne!(a.matrix().as_slice(), c.matrix().as_slice());
    }

    #[test]
    fn random_symmetric_spectrum_matches_request() {
        let n = 40;
        let op = make_random_symmetric(n, -0.9, 0.9, Some(-0.95), 12).unwrap();
        // Regenerate the requested eigenvalues from the documented draw order.
        let mut rng = SplitMix64::new(12);
        let mut requested: Vec<f64> = (0..n - 1).map(|_| rng.uniform_range(-0.9, 0.9)).collect();
        requested.push(-0.95);
        requested.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut got: Vec<f64> = op
            .matrix()
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (r, g) in requested.iter().zip(&got) {
            assert!((r - g).abs() < 1e-10);
        }
        let s = op.spectrum().unwrap();
        assert!((s.op_norm - 0.95).abs() < 1e-10);
    }

    #[test]
    fn random_symmetric_full_size_norm() {
        let op = make_random_symmetric(500, -0.9, 0.9, Some(-0.95), 1).unwrap();
        let s = op.spectrum().unwrap();
        assert!((s.op_norm - 0.95).abs() < 1e-10);
        assert!((s.lambda_min + 0.95).abs() < 1e-10);
    }

    #[test]
    fn blended_operator() {
        let op = make_diag_operator(&[0.5, -0.5], &[1.0, 1.0]).unwrap();
        let b = op.blended(0.7);
        assert!((b.matrix()[(0, 0)] - 0.65).abs() < 1e-15);
        assert!((b.matrix()[(1, 1)] + 0.05).abs() < 1e-15);
        assert!((b.offset()[0] - 0.7).abs() < 1e-15);
        // Same fixed point.
        let x = op.fixed_point().unwrap();
        let xb = b.fixed_point().unwrap();
        assert!((x[0] - xb[0]).abs() < 1e-13 && (x[1] - xb[1]).abs() < 1e-13);
    }
}
