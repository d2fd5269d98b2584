//! Tyler's M-estimator of scatter: the standard shape iteration and the
//! log-domain weight iteration.
//!
//! Standard map on shape matrices:
//! `G(S) = (p/n) sum_i x_i x_i^T / (x_i^T S^-1 x_i)`, followed by rescaling to
//! trace `p`.
//!
//! Log-domain map on weights `w in R^n`:
//! `F_j(w) = -log(x_j^T S(w)^-1 x_j)` with `S(w) = (p/n) sum_i e^{w_i} x_i x_i^T`.
//! `F(w + c 1) = F(w) + c 1`, and the Jacobian of `F` is symmetric at a fixed
//! point.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use libm::{exp, log};
use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::anderson::{aa_solve, fp_iterate, AAConfig, FixedPointOperator};
use crate::error::{Error, Result};
use crate::linalg::{
    all_finite, ensure_symmetric, norm2, numerical_rank, relative_asymmetry, symmetrize,
};
use crate::rng::SplitMix64;
use crate::theory::SpectrumSummary;

/// Largest `(max L_ii / min L_ii)^2` of a Cholesky factor accepted as
/// non-singular.
const MAX_CONDITION: f64 = 1e14;

/// A data set of `n` points in `R^p`, stored as the columns of a `p x n` matrix.
///
/// `n > p` is required for existence of the estimator but is not enforced here
/// so that degenerate sets can still be stepped; see
/// [`check_tyler_necessary_conditions`].
#[derive(Debug, Clone, PartialEq)]
pub struct TylerProblem {
    x: DMatrix<f64>,
}

impl TylerProblem {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Invalid("data matrix is empty"));
        }
        if !all_finite(x.as_slice()) {
            return Err(Error::Invalid("data entries must be finite"));
        }
        if x.column_iter().any(|c| c.iter().all(|&v| v == 0.0)) {
            return Err(Error::Invalid("data contains a zero column"));
        }
        Ok(Self { x })
    }

    /// Ambient dimension.
    pub fn p(&self) -> usize {
        self.x.nrows()
    }

    /// Number of data points.
    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.x
    }
}

/// A symmetric positive-definite `p x p` shape matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeMatrix {
    pub sigma: DMatrix<f64>,
    /// Whether `sigma` has been rescaled to trace `p`.
    pub trace_normalized: bool,
}

impl ShapeMatrix {
    /// Validates symmetry (1e-12 relative) and positive definiteness.
    pub fn new(sigma: DMatrix<f64>, trace_normalized: bool) -> Result<Self> {
        ensure_symmetric(&sigma, 1e-12)?;
        if !all_finite(sigma.as_slice()) {
            return Err(Error::SingularShape);
        }
        factor(&sigma, Error::SingularShape)?;
        Ok(Self {
            sigma,
            trace_normalized,
        })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            sigma: DMatrix::identity(p, p),
            trace_normalized: true,
        }
    }

    pub fn trace(&self) -> f64 {
        self.sigma.trace()
    }

    /// Rescales to trace `p`.
    pub fn normalized(&self) -> Self {
        Self {
            sigma: normalize_trace(&self.sigma),
            trace_normalized: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }
}

/// Log-domain iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeights {
    pub w: Vec<f64>,
}

impl LogWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if !all_finite(&w) {
            return Err(Error::Invalid("log weights must be finite"));
        }
        Ok(Self { w })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            w: alloc::vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

fn normalize_trace(s: &DMatrix<f64>) -> DMatrix<f64> {
    let p = s.nrows() as f64;
    s * (p / s.trace())
}

fn factor(s: &DMatrix<f64>, singular: Error) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(s.clone()).ok_or_else(|| singular.clone())?;
    let l = chol.l_dirty();
    let n = s.nrows();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..n {
        let d = l[(i, i)];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let ratio = hi / lo;
    if !(lo > 0.0) || !(ratio * ratio <= MAX_CONDITION) {
        return Err(singular);
    }
    Ok(chol)
}

/// `x^T S^-1 x` for every column of `x`, via the Cholesky factor of `S`.
fn quadratic_forms(chol: &Cholesky<f64, Dyn>, x: &DMatrix<f64>) -> Vec<f64> {
    let l = chol.l_dirty();
    let mut y = x.clone();
    // Triangular solves only read the lower triangle of `l`.
    l.solve_lower_triangular_mut(&mut y);
    y.column_iter().map(|c| c.norm_squared()).collect()
}

/// `(p/n) sum_i c_i x_i x_i^T`.
fn weighted_scatter(x: &DMatrix<f64>, coeffs: &[f64]) -> DMatrix<f64> {
    let (p, n) = x.shape();
    let scaled = DMatrix::from_fn(p, n, |r, c| x[(r, c)] * coeffs[c]);
    let s = &scaled * x.transpose() * (p as f64 / n as f64);
    symmetrize(&s)
}

/// `G(S)` without trace normalization.
pub fn tme_standard_map(sigma: &ShapeMatrix, prob: &TylerProblem) -> Result<DMatrix<f64>> {
    check_shape_dim(sigma, prob)?;
    let chol = factor(&sigma.sigma, Error::SingularShape)?;
    let forms = quadratic_forms(&chol, &prob.x);
    if let Some(index) = forms.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::LostPositivity { index });
    }
    let coeffs: Vec<f64> = forms.iter().map(|v| 1.0 / v).collect();
    Ok(weighted_scatter(&prob.x, &coeffs))
}

/// One standard step, rescaled to trace `p`.
pub fn tme_standard_step(sigma: &ShapeMatrix, prob: &TylerProblem) -> Result<ShapeMatrix> {
    let g = tme_standard_map(sigma, prob)?;
    Ok(ShapeMatrix {
        sigma: normalize_trace(&g),
        trace_normalized: true,
    })
}

/// `S(w)` scaled by `e^{-max w}`, together with that shift.
fn shifted_scatter(w: &[f64], prob: &TylerProblem) -> Result<(DMatrix<f64>, f64)> {
    if w.len() != prob.n() {
        return Err(Error::DimensionMismatch {
            expected: prob.n(),
            found: w.len(),
        });
    }
    if !all_finite(w) {
        return Err(Error::Invalid("log weights must be finite"));
    }
    let shift = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let coeffs: Vec<f64> = w.iter().map(|&wi| exp(wi - shift)).collect();
    Ok((weighted_scatter(&prob.x, &coeffs), shift))
}

/// `F(w)`.
pub fn tme_log_step(w: &LogWeights, prob: &TylerProblem) -> Result<LogWeights> {
    let mut out = alloc::vec![0.0; prob.n()];
    log_step_into(&w.w, prob, &mut out)?;
    Ok(LogWeights { w: out })
}

fn log_step_into(w: &[f64], prob: &TylerProblem, out: &mut [f64]) -> Result<()> {
    let (scatter, shift) = shifted_scatter(w, prob)?;
    let chol = factor(&scatter, Error::SingularScatter)?;
    let forms = quadratic_forms(&chol, &prob.x);
    for (j, (o, q)) in out.iter_mut().zip(forms).enumerate() {
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::LostPositivity { index: j });
        }
        *o = shift - log(q);
    }
    Ok(())
}

/// `S(w) = (p/n) sum_i e^{w_i} x_i x_i^T`, optionally rescaled to trace `p`.
pub fn sigma_from_w(w: &LogWeights, prob: &TylerProblem, normalize: bool) -> Result<ShapeMatrix> {
    let (scatter, shift) = shifted_scatter(&w.w, prob)?;
    factor(&scatter, Error::SingularScatter)?;
    let sigma = if normalize {
        normalize_trace(&scatter)
    } else {
        scatter * exp(shift)
    };
    Ok(ShapeMatrix {
        sigma,
        trace_normalized: normalize,
    })
}

fn check_shape_dim(sigma: &ShapeMatrix, prob: &TylerProblem) -> Result<()> {
    if sigma.sigma.nrows() != prob.p() || !sigma.sigma.is_square() {
        return Err(Error::DimensionMismatch {
            expected: prob.p(),
            found: sigma.sigma.nrows(),
        });
    }
    Ok(())
}

/// The log-domain map `F` as a fixed-point operator on `R^n`.
#[derive(Debug, Clone, Copy)]
pub struct TylerLogOperator<'a> {
    pub problem: &'a TylerProblem,
}

impl<'a> TylerLogOperator<'a> {
    pub fn new(problem: &'a TylerProblem) -> Self {
        Self { problem }
    }
}

impl FixedPointOperator for TylerLogOperator<'_> {
    fn dimension(&self) -> usize {
        self.problem.n()
    }

    fn evaluate(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        log_step_into(x, self.problem, out)
    }
}

/// The normalized standard map acting on `vec(S)` (column-major, `p^2` entries).
#[derive(Debug, Clone, Copy)]
pub struct TylerStandardOperator<'a> {
    pub problem: &'a TylerProblem,
}

impl<'a> TylerStandardOperator<'a> {
    pub fn new(problem: &'a TylerProblem) -> Self {
        Self { problem }
    }
}

impl FixedPointOperator for TylerStandardOperator<'_> {
    fn dimension(&self) -> usize {
        self.problem.p() * self.problem.p()
    }

    fn evaluate(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let p = self.problem.p();
        if x.len() != p * p || out.len() != p * p {
            return Err(Error::DimensionMismatch {
                expected: p * p,
                found: x.len(),
            });
        }
        let sigma = ShapeMatrix {
            sigma: DMatrix::from_column_slice(p, p, x),
            trace_normalized: false,
        };
        let next = tme_standard_step(&sigma, self.problem)?;
        out.copy_from_slice(next.sigma.as_slice());
        Ok(())
    }
}

/// Central-difference Jacobian of `q` at `w`; column `j` uses the step
/// `h = step (1 + |w_j|)`.
pub fn jacobian_fd<Q: FixedPointOperator + ?Sized>(
    q: &Q,
    w: &[f64],
    step: f64,
) -> Result<DMatrix<f64>> {
    let n = q.dimension();
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w.len(),
        });
    }
    if !(step > 0.0) {
        return Err(Error::Invalid("step must be positive"));
    }
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = w.to_vec();
    let mut plus = alloc::vec![0.0; n];
    let mut minus = alloc::vec![0.0; n];
    for j in 0..n {
        let h = step * (1.0 + w[j].abs());
        probe[j] = w[j] + h;
        q.evaluate(&probe, &mut plus)?;
        probe[j] = w[j] - h;
        q.evaluate(&probe, &mut minus)?;
        probe[j] = w[j];
        // The realized difference of the arguments, not 2h, divides.
        let width = (w[j] + h) - (w[j] - h);
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / width;
        }
    }
    Ok(jac)
}

/// `||J - J^T||_F / max(||J||_F, tiny)`.
pub fn symmetry_defect(j: &DMatrix<f64>) -> f64 {
    relative_asymmetry(j)
}

/// Largest symmetry defect accepted by [`deflated_tme_spectrum`].
pub const DEFLATION_MAX_DEFECT: f64 = 1e-3;
/// Smallest `|cos|` between the scale eigenvector and the constant vector.
pub const SCALE_MODE_MIN_COSINE: f64 = 0.99;

/// Spectrum of a log-domain Jacobian with its scale mode removed.
///
/// `J` is symmetrized; the eigenpair whose eigenvalue is nearest 1 is dropped
/// provided its eigenvector is aligned with the constant vector. The summary
/// covers the remaining eigenvalues.
pub fn deflated_tme_spectrum(j: &DMatrix<f64>) -> Result<SpectrumSummary> {
    if !j.is_square() {
        return Err(Error::DimensionMismatch {
            expected: j.nrows(),
            found: j.ncols(),
        });
    }
    let n = j.nrows();
    if n < 2 {
        return Err(Error::Invalid("need at least two weights"));
    }
    let defect = symmetry_defect(j);
    if !(defect <= DEFLATION_MAX_DEFECT) {
        return Err(Error::NotSymmetric { defect });
    }
    let eig = symmetrize(j).symmetric_eigen();
    let scale = (0..n)
        .min_by(|&a, &b| {
            let da = (eig.eigenvalues[a] - 1.0).abs();
            let db = (eig.eigenvalues[b] - 1.0).abs();
            da.partial_cmp(&db).unwrap_or(core::cmp::Ordering::Equal)
        })
        .ok_or(Error::NoScaleMode)?;
    let v = eig.eigenvectors.column(scale);
    let cosine = v.sum().abs() / (libm::sqrt(n as f64) * v.norm());
    if !(cosine >= SCALE_MODE_MIN_COSINE) {
        return Err(Error::NoScaleMode);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if i != scale {
            lo = lo.min(lambda);
            hi = hi.max(lambda);
        }
    }
    SpectrumSummary::from_extremes(lo, hi)
}

/// First necessary condition that failed.
#[derive(Debug, Clone, PartialEq)]
pub enum NecessaryViolation {
    TooFewPoints {
        n: usize,
        p: usize,
    },
    RankDeficient {
        rank: usize,
        p: usize,
    },
    /// `count` points lie in a `dimension`-dimensional span, with
    /// `count * p >= n * dimension`.
    CrowdedSubspace {
        dimension: usize,
        count: usize,
        spanning: Vec<usize>,
    },
}

/// Outcome of [`check_tyler_necessary_conditions`].
#[derive(Debug, Clone, PartialEq)]
pub struct NecessaryConditionsReport {
    pub passed: bool,
    pub n: usize,
    pub p: usize,
    pub rank: usize,
    /// Number of subspaces examined (all one-dimensional spans plus samples).
    pub subspaces_checked: usize,
    pub violation: Option<NecessaryViolation>,
    pub note: String,
}

/// Relative distance below which a point counts as lying in a span.
pub const SPAN_DISTANCE_TOL: f64 = 1e-8;

/// Checks necessary conditions for existence and uniqueness of the estimator:
/// `n > p`, full row rank, and that no examined `d`-dimensional span of data
/// points holds `n d / p` or more points. Every one-dimensional span through a
/// data point is examined, plus `samples` random spans with `2 <= d <= p - 1`.
/// Passing does not prove the full subspace condition.
pub fn check_tyler_necessary_conditions(
    prob: &TylerProblem,
    samples: usize,
    seed: u64,
) -> NecessaryConditionsReport {
    let (p, n) = (prob.p(), prob.n());
    let x = &prob.x;
    let rank = numerical_rank(x);
    let note = String::from(
        "necessary conditions only: one-dimensional spans exhaustively, higher spans sampled",
    );
    let mut report = NecessaryConditionsReport {
        passed: false,
        n,
        p,
        rank,
        subspaces_checked: 0,
        violation: None,
        note,
    };
    if n <= p {
        report.violation = Some(NecessaryViolation::TooFewPoints { n, p });
        return report;
    }
    if rank < p {
        report.violation = Some(NecessaryViolation::RankDeficient { rank, p });
        return report;
    }
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();

    for i in 0..n {
        let u = x.column(i) / norms[i];
        let count = (0..n)
            .filter(|&j| {
                let c = x.column(j);
                let off = c - &u * u.dot(&c);
                off.norm() <= SPAN_DISTANCE_TOL * norms[j]
            })
            .count();
        report.subspaces_checked += 1;
        if count * p >= n {
            report.violation = Some(NecessaryViolation::CrowdedSubspace {
                dimension: 1,
                count,
                spanning: alloc::vec![i],
            });
            return report;
        }
    }

    if p >= 3 {
        let mut rng = SplitMix64::new(seed);
        for _ in 0..samples {
            let d = 2 + rng.below(p - 2);
            let chosen = sample_distinct(&mut rng, n, d);
            let sub = DMatrix::from_fn(p, d, |r, c| x[(r, chosen[c])]);
            let basis = orthonormal_basis(&sub);
            let dim = basis.ncols();
            let count = (0..n)
                .filter(|&j| {
                    let c = x.column(j);
                    let proj = basis.tr_mul(&c);
                    let resid = c - &basis * proj;
                    resid.norm() <= SPAN_DISTANCE_TOL * norms[j]
                })
                .count();
            report.subspaces_checked += 1;
            if dim > 0 && count * p >= n * dim {
                report.violation = Some(NecessaryViolation::CrowdedSubspace {
                    dimension: dim,
                    count,
                    spanning: chosen,
                });
                return report;
            }
        }
    }
    report.passed = true;
    report
}

/// Left singular vectors of `a` above a relative cutoff.
fn orthonormal_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-12 * top)
        .collect();
    DMatrix::from_fn(a.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

/// `k` distinct indices from `0..n`, in draw order (partial Fisher-Yates).
fn sample_distinct(rng: &mut SplitMix64, n: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below(n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Tolerance for the reference fixed point of the log iteration.
pub const REFERENCE_TOL: f64 = 1e-13;
const REFERENCE_AA_MAX_ITER: usize = 5_000;
const REFERENCE_FP_MAX_ITER: usize = 100_000;

/// Reference fixed point `w*` of the log iteration: AA(3) from `w0` to
/// residual `1e-13`, falling back to plain iteration when AA does not get
/// there. The returned weights are shifted to have maximum zero.
pub fn tme_reference_weights(prob: &TylerProblem, w0: &LogWeights) -> Result<LogWeights> {
    let op = TylerLogOperator::new(prob);
    let config = AAConfig::new(3)
        .with_tolerance(REFERENCE_TOL)
        .with_max_iterations(REFERENCE_AA_MAX_ITER);
    let aa = aa_solve(&op, &w0.w, &config);
    let mut best = match &aa {
        Ok(trace) => best_record(trace),
        Err(_) => None,
    };
    let good = best
        .as_ref()
        .map(|(r, _)| *r <= REFERENCE_TOL)
        .unwrap_or(false);
    if !good {
        let start = best
            .as_ref()
            .map(|(_, w)| w.clone())
            .unwrap_or_else(|| w0.w.clone());
        let fp = fp_iterate(&op, &start, REFERENCE_TOL, REFERENCE_FP_MAX_ITER)?;
        if let Some(candidate) = best_record(&fp) {
            if best.as_ref().map(|(r, _)| candidate.0 < *r).unwrap_or(true) {
                best = Some(candidate);
            }
        }
    }
    let (_, mut w) = best.ok_or(Error::Invalid("reference solve produced no iterate"))?;
    let top = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for v in &mut w {
        *v -= top;
    }
    LogWeights::new(w)
}

fn best_record(trace: &crate::anderson::SolveTrace) -> Option<(f64, Vec<f64>)> {
    trace
        .records
        .iter()
        .filter(|r| !r.iterate.is_empty() && r.residual_norm.is_finite())
        .min_by(|a, b| a.residual_norm.partial_cmp(&b.residual_norm).unwrap())
        .map(|r| (r.residual_norm, r.iterate.clone()))
}

/// Trace-normalized estimator from the reference weights.
pub fn tme_reference_shape(prob: &TylerProblem) -> Result<ShapeMatrix> {
    let w = tme_reference_weights(prob, &LogWeights::zeros(prob.n()))?;
    sigma_from_w(&w, prob, true)
}

/// Frobenius distance between two matrices of equal shape.
pub fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    norm2((a - b).as_slice())
}

/// Flattens a symmetric matrix to the column-major vector used by
/// [`TylerStandardOperator`].
pub fn shape_to_vec(sigma: &ShapeMatrix) -> Vec<f64> {
    sigma.sigma.as_slice().to_vec()
}

/// One-line description of a violation.
pub fn describe_violation(v: &NecessaryViolation) -> String {
    match v {
        NecessaryViolation::TooFewPoints { n, p } => format!("n = {n} does not exceed p = {p}"),
        NecessaryViolation::RankDeficient { rank, p } => {
            format!("data rank {rank} is below p = {p}")
        }
        NecessaryViolation::CrowdedSubspace {
            dimension, count, ..
        } => format!("{count} points lie in a {dimension}-dimensional span"),
    }
}
