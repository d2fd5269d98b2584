//! Computable convergence theory for AA(m) on symmetric linear operators.
//!
//! For `q(x) = W x + a` with `W` symmetric and `||W|| < 1`, every pair of AA(m)
//! iterations contracts the residual by at least `w0 * ||W||`, where
//!
//! ```text
//! w0 = sup_{a >= 0} sin[ asin( |lmax - lmin| a / sqrt(4 + (2 - lmax - lmin)^2 a^2) )
//!                        + | atan(a) - atan((1 - (lmax + lmin)/2) a) | ]
//! ```
//!
//! so the r-linear factor of AA(m) is at most `sqrt(w0 * ||W||)`.

use alloc::vec::Vec;
use libm::{asin, atan, fabs, pow, sin, sqrt, tan};
use nalgebra::{DMatrix, DVector};

use crate::anderson::SolveTrace;
use crate::error::{Error, Result};
use crate::linalg::{eig_extremes, ensure_symmetric, norm2};
use crate::operators::fixed_point_of;

const W0_GRID_POINTS: usize = 10_001;
const GOLDEN_TOL: f64 = 1e-12;
const PAIRWISE_SLACK: f64 = 1e-9;

/// Extreme eigenvalues of a symmetric operator and the derived rate bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSummary {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `max(|lambda_min|, |lambda_max|)`.
    pub op_norm: f64,
    pub w0: f64,
    /// `sqrt(w0 * op_norm)`, the bound on the r-linear factor of AA(m).
    pub rate_bound: f64,
}

impl SpectrumSummary {
    pub fn from_extremes(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        let w0 = compute_w0(lambda_min, lambda_max)?;
        let op_norm = fabs(lambda_min).max(fabs(lambda_max));
        Ok(Self {
            lambda_min,
            lambda_max,
            op_norm,
            w0,
            rate_bound: sqrt(w0 * op_norm),
        })
    }

    /// `w0 * ||W||`, the per-pair contraction bound.
    pub fn pair_bound(&self) -> f64 {
        self.w0 * self.op_norm
    }
}

fn check_spectrum(lambda_min: f64, lambda_max: f64) -> Result<()> {
    if lambda_min > -1.0 && lambda_min <= lambda_max && lambda_max < 1.0 {
        Ok(())
    } else {
        Err(Error::BadSpectrum)
    }
}

/// The quantity under the supremum defining `w0`, at `a >= 0`.
///
/// `a = f64::INFINITY` returns the analytic limit `|lmax - lmin| / (2 - lmax - lmin)`.
pub fn w0_objective(a: f64, lambda_min: f64, lambda_max: f64) -> Result<f64> {
    check_spectrum(lambda_min, lambda_max)?;
    if !(a >= 0.0) {
        return Err(Error::Invalid("a must be non-negative"));
    }
    let spread = fabs(lambda_max - lambda_min);
    let shift = 2.0 - lambda_max - lambda_min;
    if a.is_infinite() {
        return Ok(spread / shift);
    }
    let ratio = (spread * a / sqrt(4.0 + shift * shift * a * a)).clamp(-1.0, 1.0);
    let centre_angle = fabs(atan(a) - atan((1.0 - 0.5 * (lambda_max + lambda_min)) * a));
    Ok(sin(asin(ratio) + centre_angle))
}

/// Supremum of [`w0_objective`] over `a in [0, inf]`.
///
/// Substitutes `a = tan(theta)`, scans a uniform grid over `theta in [0, pi/2]`
/// (the endpoint through the analytic limit) and refines the best cell by
/// golden-section search.
pub fn compute_w0(lambda_min: f64, lambda_max: f64) -> Result<f64> {
    check_spectrum(lambda_min, lambda_max)?;
    let half_pi = core::f64::consts::FRAC_PI_2;
    let h = half_pi / (W0_GRID_POINTS - 1) as f64;
    let objective = |theta: f64| -> f64 {
        let a = if theta >= half_pi {
            f64::INFINITY
        } else {
            tan(theta)
        };
        w0_objective(a, lambda_min, lambda_max).unwrap_or(f64::NEG_INFINITY)
    };

    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..W0_GRID_POINTS {
        let v = objective(i as f64 * h);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = if best_i == 0 {
        0.0
    } else {
        (best_i - 1) as f64 * h
    };
    let hi = ((best_i + 1) as f64 * h).min(half_pi);
    let refined = golden_section_max(&objective, lo, hi);
    Ok(best.max(refined))
}

fn golden_section_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (sqrt(5.0) - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > GOLDEN_TOL {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    f(0.5 * (lo + hi)).max(fc).max(fd)
}

/// `w0` for a scalar matrix `W = w I`, `0 < w < 1`: `w / (2 - w)`.
pub fn scalar_w0(w: f64) -> f64 {
    w / (2.0 - w)
}

/// Starting pair `(x~0, x~1)` in residual coordinates that makes the pairwise
/// bound an equality for AA(1) with `W = w I`.
///
/// `x~1 = [0, 1]` and `x~0 = x~1 + [sin(phi), -cos(phi)]` with
/// `sin(phi) = 1/sqrt(2 - w)`; the steady per-pair ratio is `w^2 / (2 - w)`.
pub fn make_tight_init_scalar(w: f64) -> ([f64; 2], [f64; 2]) {
    let sin_phi = 1.0 / sqrt(2.0 - w);
    let cos_phi = sqrt((1.0 - w) / (2.0 - w));
    let xt1 = [0.0, 1.0];
    let xt0 = [xt1[0] + sin_phi, xt1[1] - cos_phi];
    (xt0, xt1)
}

/// Residual-coordinate start `x~0 = [u, 1]` with `(1 - w) u^2 = (1 + w)` for
/// `W = Diag(w, -w)`, on which AA(1) contracts by exactly `w` per step.
pub fn make_counterexample_init(w: f64) -> [f64; 2] {
    [sqrt((1.0 + w) / (1.0 - w)), 1.0]
}

/// One row of the pairwise-improvement check at iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseRow {
    pub k: usize,
    /// `||(W - I)(x^(k+1) - x*)|| / ||(W - I)(x^(k-1) - x*)||`.
    pub lhs: f64,
    /// `w0 * ||W||`.
    pub rhs: f64,
    /// `lhs <= rhs * (1 + 1e-9)`.
    pub satisfied: bool,
    /// The denominator sits at the roundoff floor; the row is exempt.
    pub floor: bool,
}

impl PairwiseRow {
    pub fn is_violation(&self) -> bool {
        !self.satisfied && !self.floor
    }
}

/// Checks the per-pair contraction `lhs <= w0 ||W||` for every `k >= 2` of a
/// trace produced on `q(x) = W x + a`.
///
/// Rows whose denominator is at most `100 eps ||(W - I)(x^(1) - x*)||` are
/// flagged `floor`.
pub fn check_pairwise_bound(
    trace: &SolveTrace,
    w: &DMatrix<f64>,
    a: &[f64],
) -> Result<Vec<PairwiseRow>> {
    let spectrum = spectrum_of(w)?;
    let offset = DVector::from_column_slice(a);
    if offset.len() != w.nrows() {
        return Err(Error::DimensionMismatch {
            expected: w.nrows(),
            found: offset.len(),
        });
    }
    let x_star = DVector::from_vec(fixed_point_of(w, &offset)?);
    let n = w.nrows();
    let residual_map = w - DMatrix::identity(n, n);
    let mut residual_norms = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        if r.iterate.len() != n {
            return Err(Error::Invalid("trace does not retain iterates"));
        }
        let e = DVector::from_column_slice(&r.iterate) - &x_star;
        residual_norms.push(norm2((&residual_map * e).as_slice()));
    }
    let rhs = spectrum.pair_bound();
    let floor_level = match residual_norms.get(1) {
        Some(&r1) => 1e2 * f64::EPSILON * r1,
        None => 0.0,
    };
    let mut rows = Vec::new();
    for k in 2..residual_norms.len().saturating_sub(1) {
        let num = residual_norms[k + 1];
        let den = residual_norms[k - 1];
        let lhs = num / den;
        rows.push(PairwiseRow {
            k,
            lhs,
            rhs,
            satisfied: lhs <= rhs * (1.0 + PAIRWISE_SLACK),
            floor: den <= floor_level,
        });
    }
    Ok(rows)
}

/// `r_est(n) = max_{j >= n} e_j^(1/j)`.
///
/// `error_norms[i]` is the error at iteration `i + 1`, so the first entry is
/// raised to the power 1. Zero errors are replaced by the smallest positive
/// normal `f64`. The output has the same indexing and is non-increasing.
pub fn estimate_r_factor(error_norms: &[f64]) -> Vec<f64> {
    let mut out = alloc::vec![0.0; error_norms.len()];
    let mut running = f64::NEG_INFINITY;
    for (i, &e) in error_norms.iter().enumerate().rev() {
        let e = if e > 0.0 { e } else { f64::MIN_POSITIVE };
        let root = pow(e, 1.0 / (i + 1) as f64);
        running = running.max(root);
        out[i] = running;
    }
    out
}

/// Extreme eigenvalues, norm, `w0` and rate bound of a symmetric matrix.
pub fn spectrum_of(w: &DMatrix<f64>) -> Result<SpectrumSummary> {
    ensure_symmetric(w, 1e-12)?;
    let (lo, hi) = eig_extremes(w);
    SpectrumSummary::from_extremes(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent brute-force oracle: dense scan in `a = tan(theta)`.
    fn brute_w0(lmin: f64, lmax: f64, points: usize) -> f64 {
        let half_pi = core::f64::consts::FRAC_PI_2;
        let mut best = w0_objective(f64::INFINITY, lmin, lmax).unwrap();
        for i in 0..points {
            let theta = half_pi * i as f64 / points as f64;
            best = best.max(w0_objective(tan(theta), lmin, lmax).unwrap());
        }
        best
    }

    #[test]
    fn objective_edge_values() {
        assert_eq!(w0_objective(0.0, -0.4, 0.7).unwrap(), 0.0);
        for a in [0.0, 0.3, 5.0, 1e6] {
            assert!(w0_objective(a, 0.0, 0.0).unwrap().abs() < 1e-15);
        }
        assert!((w0_objective(f64::INFINITY, -0.3, 0.3).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(w0_objective(1.0, -1.0, 0.3), Err(Error::BadSpectrum));
        assert_eq!(w0_objective(1.0, 0.5, 0.3), Err(Error::BadSpectrum));
    }

    #[test]
    fn w0_equality_case() {
        assert!((compute_w0(-0.3, 0.3).unwrap() - 0.3).abs() < 1e-10);
    }

    #[test]
    fn w0_scalar_reduction() {
        assert!((compute_w0(0.5, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-10);
        for i in 1..=9 {
            let w = i as f64 / 10.0;
            assert!(
                (compute_w0(w, w).unwrap() - scalar_w0(w)).abs() < 1e-9,
                "w = {w}"
            );
        }
        assert!((scalar_w0(0.8) - 2.0 / 3.0).abs() < 1e-15);
        assert!(scalar_w0(1e-12) < 1e-11);
    }

    #[test]
    fn w0_for_w1_spectrum_regression() {
        // Frozen from the 1e7-point brute-force scan below.
        const W1_W0: f64 = 0.616_211_945_507_724;
        let w0 = compute_w0(-0.6, 0.62).unwrap();
        assert!(w0 < 0.62);
        assert!((w0 - W1_W0).abs() < 1e-9, "w0 = {w0:.16}");
        let coarse = brute_w0(-0.6, 0.62, 200_000);
        assert!(coarse <= w0 + 1e-12);
        assert!(w0 - coarse < 1e-8);
    }

    #[test]
    fn w0_for_w1_brute_force_oracle() {
        let dense = brute_w0(-0.6, 0.62, 10_000_000);
        let w0 = compute_w0(-0.6, 0.62).unwrap();
        assert!((dense - w0).abs() < 1e-10, "dense {dense:.16} vs {w0:.16}");
    }

    #[test]
    fn tight_init_geometry() {
        let (xt0, xt1) = make_tight_init_scalar(0.5);
        assert_eq!(xt1, [0.0, 1.0]);
        let d = [xt0[0] - xt1[0], xt0[1] - xt1[1]];
        assert!((norm2(&d) - 1.0).abs() < 1e-15);
        assert!((d[0] - 1.0 / sqrt(1.5)).abs() < 1e-15);
    }

    #[test]
    fn counterexample_init_values() {
        let x = make_counterexample_init(0.5);
        assert!((x[0] - sqrt(3.0)).abs() < 1e-15 && x[1] == 1.0);
        assert!((make_counterexample_init(0.8)[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn r_factor_geometric_decay() {
        let errors: Vec<f64> = (1..=60).map(|k| pow(0.5, k as f64)).collect();
        for r in estimate_r_factor(&errors) {
            assert!((r - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn r_factor_spike_and_zero() {
        let mut errors: Vec<f64> = (1..=30).map(|k| pow(0.5, k as f64)).collect();
        errors[9] = 1.0; // iteration 10
        let r = estimate_r_factor(&errors);
        assert!(r[..10].iter().all(|&x| x == 1.0));
        assert!((r[10] - 0.5).abs() < 1e-12);
        for w in r.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let z = estimate_r_factor(&[0.5, 0.0]);
        assert!(z[1] < 1e-100 && z[0] == 0.5);
        assert!(estimate_r_factor(&[]).is_empty());
    }

    #[test]
    fn spectrum_summaries() {
        let zero = spectrum_of(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(
            (
                zero.lambda_min,
                zero.lambda_max,
                zero.op_norm,
                zero.w0,
                zero.rate_bound
            ),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
        let d = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![0.5, -0.5]));
        let s = spectrum_of(&d).unwrap();
        assert!((s.w0 - 0.5).abs() < 1e-12);
        assert!((s.rate_bound - 0.5).abs() < 1e-12);
        let asym = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.0, 0.1]);
        assert!(matches!(
            spectrum_of(&asym),
            Err(Error::NotSymmetric { .. })
        ));
    }
}
