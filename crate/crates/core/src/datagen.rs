//! Seeded generators for the two synthetic data models.
//!
//! All normals come from [`SplitMix64::standard_normal`], drawn in the order
//! documented on each generator.

use alloc::vec::Vec;
use libm::{pow, sqrt};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{ensure_symmetric, frobenius, symmetrize};
use crate::rng::SplitMix64;
use crate::tyler::TylerProblem;

/// Parameters of a data model plus its seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataModelSpec {
    /// `n` points `S_p^{1/2} z` with `(S_p)_{ij} = 0.7^{|i - j|}`.
    Model1 { p: usize, n: usize, seed: u64 },
    /// `n0` points from a random `D`-dimensional Gaussian plus `n1` points
    /// supported on the first `d` coordinates.
    Model2 {
        n0: usize,
        n1: usize,
        big_d: usize,
        d: usize,
        seed: u64,
    },
}

impl DataModelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DataModelSpec::Model1 { p, n, .. } => {
                if p < 2 || n <= p {
                    return Err(Error::Invalid("model 1 needs p >= 2 and n > p"));
                }
            }
            DataModelSpec::Model2 {
                n0, n1, big_d, d, ..
            } => {
                if d == 0 || d > big_d || n0 + n1 <= big_d {
                    return Err(Error::Invalid("model 2 needs 1 <= d <= D and n0 + n1 > D"));
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<TylerProblem> {
        self.validate()?;
        match *self {
            DataModelSpec::Model1 { p, n, seed } => gen_data_model_1(p, n, seed),
            DataModelSpec::Model2 {
                n0,
                n1,
                big_d,
                d,
                seed,
            } => gen_data_model_2(n0, n1, big_d, d, seed),
        }
    }

    pub fn seed(&self) -> u64 {
        match *self {
            DataModelSpec::Model1 { seed, .. } | DataModelSpec::Model2 { seed, .. } => seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            DataModelSpec::Model1 { p, n, .. } => DataModelSpec::Model1 { p, n, seed },
            DataModelSpec::Model2 {
                n0, n1, big_d, d, ..
            } => DataModelSpec::Model2 {
                n0,
                n1,
                big_d,
                d,
                seed,
            },
        }
    }
}

/// `(S_p)_{ij} = 0.7^{|i - j|}`.
pub fn sp_matrix(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| pow(0.7, i.abs_diff(j) as f64))
}

/// Symmetric square root of a symmetric positive semi-definite matrix.
///
/// Eigenvalues down to `-1e-10` (relative to the largest magnitude) are
/// clamped to zero; more negative ones are rejected.
pub fn matrix_sqrt_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_symmetric(s, 1e-12)?;
    let eig = symmetrize(s).symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let min_eigenvalue = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eigenvalue < -1e-10 * scale {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue });
    }
    let roots = eig.eigenvalues.map(|v| sqrt(v.max(0.0)));
    let v = &eig.eigenvectors;
    let r = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok(symmetrize(&r))
}

/// Relative Frobenius residual `||R R - S|| / max(||S||, tiny)`.
pub fn sqrt_residual(r: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    frobenius(&(r * r - s)) / frobenius(s).max(f64::MIN_POSITIVE)
}

/// `n` columns `S_p^{1/2} z_i`. The `z_i` are drawn one after another, each
/// with its `p` entries in order.
pub fn gen_data_model_1(p: usize, n: usize, seed: u64) -> Result<TylerProblem> {
    if p == 0 || n == 0 {
        return Err(Error::Invalid("dimensions must be positive"));
    }
    let root = matrix_sqrt_psd(&sp_matrix(p))?;
    let mut rng = SplitMix64::new(seed);
    let z = DMatrix::from_column_slice(p, n, &rng.normal_vec(p * n));
    TylerProblem::new(root * z)
}

/// `X = [A B ; [C / sqrt(d) | 0]]^T` with `A` (`n0 x D`), `B` (`D x D`) and
/// `C` (`n1 x d`) standard normal, drawn in that order, each row by row.
/// Returns the `D x (n0 + n1)` data matrix.
pub fn gen_data_model_2(
    n0: usize,
    n1: usize,
    big_d: usize,
    d: usize,
    seed: u64,
) -> Result<TylerProblem> {
    if big_d == 0 || d == 0 || d > big_d || n0 + n1 == 0 {
        return Err(Error::Invalid("model 2 needs 1 <= d <= D and n0 + n1 > 0"));
    }
    let mut rng = SplitMix64::new(seed);
    let a = DMatrix::from_row_slice(n0, big_d, &rng.normal_vec(n0 * big_d));
    let b = DMatrix::from_row_slice(big_d, big_d, &rng.normal_vec(big_d * big_d));
    let c = DMatrix::from_row_slice(n1, d, &rng.normal_vec(n1 * d));
    let inliers = a * b;
    let scale = 1.0 / sqrt(d as f64);
    let mut x = DMatrix::zeros(big_d, n0 + n1);
    for i in 0..n0 {
        for k in 0..big_d {
            x[(k, i)] = inliers[(i, k)];
        }
    }
    for i in 0..n1 {
        for k in 0..d {
            x[(k, n0 + i)] = c[(i, k)] * scale;
        }
    }
    TylerProblem::new(x)
}

/// Empirical second-moment matrix `(1/n) X X^T` of the columns.
pub fn empirical_covariance(prob: &TylerProblem) -> DMatrix<f64> {
    let x = prob.data();
    x * x.transpose() / prob.n() as f64
}

/// Columns of a data matrix as owned vectors.
pub fn columns(prob: &TylerProblem) -> Vec<Vec<f64>> {
    prob.data()
        .column_iter()
        .map(|c| c.iter().cloned().collect())
        .collect()
}
