//! Fixed-point iteration and Anderson acceleration AA(m).
//!
//! The solver keeps a sliding window of at most `m + 1` iterates `x_j`,
//! their images `q(x_j)` and residuals `f_j = q(x_j) - x_j`. Each step solves
//!
//! ```text
//! min || sum_j alpha_j f_j ||_2   s.t.  sum_j alpha_j = 1  (and |alpha_j| <= C0)
//! ```
//!
//! and moves to `x+ = beta * sum_j alpha_j q(x_j) + (1 - beta) * sum_j alpha_j x_j`.
//! With `beta = 1` and no coefficient bound this is plain AA(m); a finite
//! bound gives the modified variant used for nonlinear operators.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy_combination, ensure_symmetric, min_norm_lstsq, norm2};

/// Coefficient bound used by modified AA(m) when none is given.
pub const DEFAULT_COEFF_BOUND: f64 = 1e4;
/// Relative singular-value cutoff for the least-squares subproblem.
pub const DEFAULT_SVD_CUTOFF: f64 = 1e-12;

const SUM_TOL: f64 = 1e-12;
const STAGNATION_WINDOW: usize = 50;
const STAGNATION_REL_GAIN: f64 = 1e-3;
const STAGNATION_ARM_FACTOR: f64 = 1e3;

/// A map `q: R^n -> R^n` whose fixed point is sought.
///
/// Implementations must be deterministic and free of observable side effects.
pub trait FixedPointOperator {
    fn dimension(&self) -> usize;

    /// Writes `q(x)` into `out`. Both slices have length `dimension()`.
    fn evaluate(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
}

impl<T: FixedPointOperator + ?Sized> FixedPointOperator for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn evaluate(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).evaluate(x, out)
    }
}

/// Adapts a closure `|x, out| { ... }` into a [`FixedPointOperator`].
pub struct FnOperator<F> {
    dimension: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dimension: usize, f: F) -> Self {
        Self { dimension, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> FixedPointOperator for FnOperator<F> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(x, out);
        Ok(())
    }
}

/// Solver parameters for AA(m) and its bounded and damped variants.
#[derive(Debug, Clone, PartialEq)]
pub struct AAConfig {
    /// Depth `m >= 1`: the window holds at most `m + 1` entries.
    pub depth: usize,
    /// `Some(C0)` bounds every coefficient by `|alpha_j| <= C0`.
    pub coeff_bound: Option<f64>,
    /// Damping `beta` in `(0, 1]`; `1` is undamped.
    pub damping: f64,
    /// Stop once `||q(x) - x||_2 <= residual_tol`.
    pub residual_tol: f64,
    pub max_iterations: usize,
    /// Relative singular-value truncation for the subproblem.
    pub svd_cutoff: f64,
    /// Store every iterate in the trace. Turn off for long runs on large
    /// problems and use an observer instead.
    pub keep_iterates: bool,
}

impl AAConfig {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            coeff_bound: None,
            damping: 1.0,
            residual_tol: 1e-12,
            max_iterations: 10_000,
            svd_cutoff: DEFAULT_SVD_CUTOFF,
            keep_iterates: true,
        }
    }

    /// Modified AA(m) with the default coefficient bound.
    pub fn modified(depth: usize) -> Self {
        Self::new(depth).with_coeff_bound(DEFAULT_COEFF_BOUND)
    }

    pub fn with_coeff_bound(mut self, c0: f64) -> Self {
        self.coeff_bound = Some(c0);
        self
    }

    pub fn with_damping(mut self, beta: f64) -> Self {
        self.damping = beta;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.residual_tol = tol;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_keep_iterates(mut self, keep: bool) -> Self {
        self.keep_iterates = keep;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Invalid("depth must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Invalid("damping must lie in (0, 1]"));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::Invalid("residual tolerance must be positive"));
        }
        if !(self.svd_cutoff > 0.0 && self.svd_cutoff < 1.0) {
            return Err(Error::Invalid("svd cutoff must lie in (0, 1)"));
        }
        if let Some(c0) = self.coeff_bound {
            if !(c0 > 0.0) {
                return Err(Error::Invalid("coefficient bound must be positive"));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::Invalid("max_iterations must be positive"));
        }
        Ok(())
    }
}

/// Sliding window of iterates, their images and residuals, oldest first.
#[derive(Debug, Clone)]
pub struct AAHistory {
    capacity: usize,
    iterates: VecDeque<Vec<f64>>,
    images: VecDeque<Vec<f64>>,
    residuals: VecDeque<Vec<f64>>,
}

impl AAHistory {
    /// Window for depth `m`, holding at most `m + 1` entries.
    pub fn new(depth: usize) -> Self {
        let capacity = depth + 1;
        Self {
            capacity,
            iterates: VecDeque::with_capacity(capacity),
            images: VecDeque::with_capacity(capacity),
            residuals: VecDeque::with_capacity(capacity),
        }
    }

    /// Appends `(x, q(x))`, evicting the oldest entry when full.
    pub fn push(&mut self, iterate: Vec<f64>, image: Vec<f64>) {
        let residual = image.iter().zip(&iterate).map(|(g, x)| g - x).collect();
        if self.iterates.len() == self.capacity {
            self.iterates.pop_front();
            self.images.pop_front();
            self.residuals.pop_front();
        }
        self.iterates.push_back(iterate);
        self.images.push_back(image);
        self.residuals.push_back(residual);
    }

    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn iterates(&self) -> &VecDeque<Vec<f64>> {
        &self.iterates
    }

    pub fn images(&self) -> &VecDeque<Vec<f64>> {
        &self.images
    }

    pub fn residuals(&self) -> &VecDeque<Vec<f64>> {
        &self.residuals
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    Stagnated,
}

/// One iteration of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// `x^(k)`; empty when the run did not retain iterates.
    pub iterate: Vec<f64>,
    /// `||q(x^(k)) - x^(k)||_2`.
    pub residual_norm: f64,
    /// Coefficients used to form `x^(k+1)`; empty for plain fixed-point steps
    /// and for the final record.
    pub coefficients: Vec<f64>,
    /// Subproblem objective paired with `coefficients`.
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl SolveTrace {
    /// Number of iterations taken, i.e. the index of the last record.
    pub fn iterations(&self) -> usize {
        self.records.last().map(|r| r.k).unwrap_or(0)
    }

    pub fn final_residual(&self) -> f64 {
        self.records
            .last()
            .map(|r| r.residual_norm)
            .unwrap_or(f64::NAN)
    }

    pub fn residual_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual_norm).collect()
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn last_iterate(&self) -> Option<&[f64]> {
        self.records
            .last()
            .map(|r| r.iterate.as_slice())
            .filter(|x| !x.is_empty())
    }
}

/// Minimizer of the AA least-squares subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub coefficients: Vec<f64>,
    /// `|| sum_j alpha_j f_j ||_2` at the returned coefficients.
    pub objective: f64,
}

/// Solves `min ||sum_j alpha_j f_j||` over `sum_j alpha_j = 1`, optionally with
/// `|alpha_j| <= c0`.
///
/// The sum constraint is eliminated by `alpha = e_last + D gamma`, where the
/// columns of `D` are `e_j - e_last`, and the resulting least-squares problem
/// is solved through a truncated SVD, which yields the minimum-norm `gamma`.
/// With a finite bound, every free/upper/lower activity pattern of the box is
/// enumerated in lexicographic order and the best feasible candidate is kept.
pub fn aa_solve_subproblem<V: AsRef<[f64]>>(
    residuals: &[V],
    coeff_bound: Option<f64>,
    svd_cutoff: f64,
) -> Result<SubproblemSolution> {
    let len = residuals.len();
    if len == 0 {
        return Err(Error::Invalid("empty residual window"));
    }
    let dim = residuals[0].as_ref().len();
    for r in residuals {
        if r.as_ref().len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.as_ref().len(),
            });
        }
    }
    if let Some(c0) = coeff_bound {
        if !(c0 > 0.0) {
            return Err(Error::Invalid("coefficient bound must be positive"));
        }
        if c0 * (len as f64) < 1.0 {
            return Err(Error::Infeasible { c0, window: len });
        }
    }

    if residuals
        .iter()
        .all(|r| r.as_ref().iter().all(|&v| v == 0.0))
    {
        let mut coefficients = vec![0.0; len];
        coefficients[len - 1] = 1.0;
        return Ok(SubproblemSolution {
            coefficients,
            objective: 0.0,
        });
    }

    let all_free: Vec<usize> = (0..len).collect();
    let unconstrained = solve_with_fixed(residuals, &all_free, &[], 1.0, svd_cutoff);
    let c0 = match coeff_bound {
        None => return Ok(finish(residuals, unconstrained)),
        Some(c0) => c0,
    };
    if within_box(&unconstrained, c0) {
        return Ok(finish(residuals, unconstrained));
    }

    let patterns = 3usize.pow(len as u32);
    let mut best: Option<SubproblemSolution> = None;
    let mut free = Vec::with_capacity(len);
    let mut fixed = Vec::with_capacity(len);
    for pattern in 1..patterns {
        free.clear();
        fixed.clear();
        let mut code = pattern;
        let mut digits = vec![0u8; len];
        for slot in (0..len).rev() {
            digits[slot] = (code % 3) as u8;
            code /= 3;
        }
        let mut fixed_sum = 0.0;
        for (j, &d) in digits.iter().enumerate() {
            match d {
                0 => free.push(j),
                1 => {
                    fixed.push((j, c0));
                    fixed_sum += c0;
                }
                _ => {
                    fixed.push((j, -c0));
                    fixed_sum -= c0;
                }
            }
        }
        let candidate = if free.is_empty() {
            if (fixed_sum - 1.0).abs() > SUM_TOL {
                continue;
            }
            let mut coefficients = vec![0.0; len];
            for &(j, v) in &fixed {
                coefficients[j] = v;
            }
            coefficients
        } else {
            solve_with_fixed(residuals, &free, &fixed, 1.0 - fixed_sum, svd_cutoff)
        };
        if !within_box(&candidate, c0) {
            continue;
        }
        let sol = finish(residuals, candidate);
        let better = match &best {
            None => true,
            Some(b) => sol.objective < b.objective * (1.0 - 1e-12),
        };
        if better {
            best = Some(sol);
        }
    }
    // The bound admits at least the uniform combination, so some pattern is
    // feasible; fall back to it defensively against roundoff at the box edge.
    Ok(best.unwrap_or_else(|| finish(residuals, vec![1.0 / len as f64; len])))
}

fn within_box(coefficients: &[f64], c0: f64) -> bool {
    coefficients.iter().all(|a| a.abs() <= c0 + SUM_TOL)
}

fn finish<V: AsRef<[f64]>>(residuals: &[V], coefficients: Vec<f64>) -> SubproblemSolution {
    let combo = axpy_combination(&coefficients, residuals);
    SubproblemSolution {
        objective: norm2(&combo),
        coefficients,
    }
}

/// Minimizes over the `free` coefficients with the others pinned, subject to
/// the free coefficients summing to `target`.
fn solve_with_fixed<V: AsRef<[f64]>>(
    residuals: &[V],
    free: &[usize],
    fixed: &[(usize, f64)],
    target: f64,
    svd_cutoff: f64,
) -> Vec<f64> {
    let len = residuals.len();
    let dim = residuals[0].as_ref().len();
    let mut coefficients = vec![0.0; len];
    for &(j, v) in fixed {
        coefficients[j] = v;
    }
    let last = *free.last().expect("at least one free coefficient");
    let f_last = residuals[last].as_ref();

    let mut rhs = DVector::zeros(dim);
    for &(j, v) in fixed {
        for (r, x) in rhs.iter_mut().zip(residuals[j].as_ref()) {
            *r += v * x;
        }
    }
    for (r, x) in rhs.iter_mut().zip(f_last) {
        *r += target * x;
    }

    let others = &free[..free.len() - 1];
    if others.is_empty() {
        coefficients[last] = target;
        return coefficients;
    }
    let mut diff = DMatrix::zeros(dim, others.len());
    for (c, &j) in others.iter().enumerate() {
        let f_j = residuals[j].as_ref();
        for i in 0..dim {
            diff[(i, c)] = f_j[i] - f_last[i];
        }
    }
    let gamma = min_norm_lstsq(&diff, &(-rhs), svd_cutoff);
    let mut gamma_sum = 0.0;
    for (c, &j) in others.iter().enumerate() {
        coefficients[j] = gamma[c];
        gamma_sum += gamma[c];
    }
    coefficients[last] = target - gamma_sum;
    coefficients
}

/// Output of a single accelerated update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub next: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub objective: f64,
}

/// Forms `x^(k+1)` from the current window.
///
/// `q` is not evaluated here; the images stored in `history` are reused.
/// `config.damping` may be zero for this call, giving `sum_j alpha_j x_j`.
pub fn aa_step<Q: FixedPointOperator + ?Sized>(
    q: &Q,
    history: &AAHistory,
    config: &AAConfig,
) -> Result<StepOutput> {
    if history.is_empty() {
        return Err(Error::Invalid("empty history"));
    }
    let dim = q.dimension();
    if history.iterates[0].len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: history.iterates[0].len(),
        });
    }
    let beta = config.damping;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Invalid("damping must lie in [0, 1]"));
    }
    let residuals: Vec<&[f64]> = history.residuals.iter().map(|r| r.as_slice()).collect();
    let sol = aa_solve_subproblem(&residuals, config.coeff_bound, config.svd_cutoff)?;

    let images: Vec<&[f64]> = history.images.iter().map(|r| r.as_slice()).collect();
    let mut next = if beta > 0.0 {
        axpy_combination(&sol.coefficients, &images)
    } else {
        vec![0.0; dim]
    };
    if beta < 1.0 {
        let iterates: Vec<&[f64]> = history.iterates.iter().map(|r| r.as_slice()).collect();
        let mixed = axpy_combination(&sol.coefficients, &iterates);
        for (n, x) in next.iter_mut().zip(&mixed) {
            *n = beta * *n + (1.0 - beta) * x;
        }
    }
    if !all_finite(&next) {
        return Err(Error::Diverged {
            iteration: 0,
            last_finite: history.iterates.back().cloned().unwrap_or_default(),
        });
    }
    Ok(StepOutput {
        next,
        coefficients: sol.coefficients,
        objective: sol.objective,
    })
}

fn evaluate_checked<Q: FixedPointOperator + ?Sized>(
    q: &Q,
    x: &[f64],
    k: usize,
) -> Result<Vec<f64>> {
    let mut image = vec![0.0; x.len()];
    q.evaluate(x, &mut image)?;
    if !all_finite(&image) {
        return Err(Error::Diverged {
            iteration: k,
            last_finite: x.to_vec(),
        });
    }
    Ok(image)
}

fn check_start<Q: FixedPointOperator + ?Sized>(q: &Q, x0: &[f64]) -> Result<()> {
    if x0.len() != q.dimension() {
        return Err(Error::DimensionMismatch {
            expected: q.dimension(),
            found: x0.len(),
        });
    }
    if !all_finite(x0) {
        return Err(Error::Invalid("initial iterate is not finite"));
    }
    Ok(())
}

/// Plain fixed-point iteration `x^(k+1) = q(x^(k))`.
pub fn fp_iterate<Q: FixedPointOperator + ?Sized>(
    q: &Q,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveTrace> {
    fp_iterate_observed(q, x0, tol, max_iter, true, |_, _, _| {})
}

/// [`fp_iterate`] with an observer called as `observer(k, x^(k), residual)`.
pub fn fp_iterate_observed<Q, O>(
    q: &Q,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
    keep_iterates: bool,
    mut observer: O,
) -> Result<SolveTrace>
where
    Q: FixedPointOperator + ?Sized,
    O: FnMut(usize, &[f64], f64),
{
    check_start(q, x0)?;
    if !(tol > 0.0) {
        return Err(Error::Invalid("tolerance must be positive"));
    }
    let mut records = Vec::new();
    let mut x = x0.to_vec();
    let mut k = 0;
    let termination = loop {
        let image = evaluate_checked(q, &x, k)?;
        let residual = image.iter().zip(&x).map(|(g, v)| g - v).collect::<Vec<_>>();
        let residual_norm = norm2(&residual);
        observer(k, &x, residual_norm);
        records.push(IterationRecord {
            k,
            iterate: if keep_iterates { x.clone() } else { Vec::new() },
            residual_norm,
            coefficients: Vec::new(),
            objective: None,
        });
        if residual_norm <= tol {
            break Termination::Converged;
        }
        if k >= max_iter {
            break Termination::MaxIterations;
        }
        x = image;
        k += 1;
    };
    Ok(SolveTrace {
        records,
        termination,
    })
}

/// Runs AA(m) from `x0`. Step 1 is `x^(1) = q(x^(0))` (damped when
/// `beta < 1`); from `k = 1` on, the window `{x^(k - m_k), ..., x^(k)}` with
/// `m_k = min(m, k)` is combined.
pub fn aa_solve<Q: FixedPointOperator + ?Sized>(
    q: &Q,
    x0: &[f64],
    config: &AAConfig,
) -> Result<SolveTrace> {
    aa_solve_observed(q, &[x0], config, |_, _, _| {})
}

/// Runs AA(m) seeded with several independent starting iterates, e.g. an
/// `x^(0), x^(1)` pair not related by `x^(1) = q(x^(0))`. The first
/// combination happens at `k = starts.len() - 1`.
pub fn aa_solve_from<Q: FixedPointOperator + ?Sized>(
    q: &Q,
    starts: &[&[f64]],
    config: &AAConfig,
) -> Result<SolveTrace> {
    aa_solve_observed(q, starts, config, |_, _, _| {})
}

/// General AA(m) driver with an observer called as `observer(k, x^(k), residual)`.
pub fn aa_solve_observed<Q, O>(
    q: &Q,
    starts: &[&[f64]],
    config: &AAConfig,
    mut observer: O,
) -> Result<SolveTrace>
where
    Q: FixedPointOperator + ?Sized,
    O: FnMut(usize, &[f64], f64),
{
    config.validate()?;
    if starts.is_empty() {
        return Err(Error::Invalid("no starting iterate"));
    }
    for s in starts {
        check_start(q, s)?;
    }

    let mut history = AAHistory::new(config.depth);
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_improvement = 0usize;
    let mut x = starts[0].to_vec();
    let mut k = 0usize;

    let termination = loop {
        let image = evaluate_checked(q, &x, k)?;
        let residual_norm = norm2(&image.iter().zip(&x).map(|(g, v)| g - v).collect::<Vec<_>>());
        observer(k, &x, residual_norm);
        records.push(IterationRecord {
            k,
            iterate: if config.keep_iterates {
                x.clone()
            } else {
                Vec::new()
            },
            residual_norm,
            coefficients: Vec::new(),
            objective: None,
        });
        if residual_norm <= config.residual_tol {
            break Termination::Converged;
        }
        if k >= config.max_iterations {
            break Termination::MaxIterations;
        }
        if residual_norm < best * (1.0 - STAGNATION_REL_GAIN) {
            best = residual_norm;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if best < STAGNATION_ARM_FACTOR * config.residual_tol
            && since_improvement >= STAGNATION_WINDOW
        {
            break Termination::Stagnated;
        }

        history.push(core::mem::take(&mut x), image);
        if k + 1 < starts.len() {
            x = starts[k + 1].to_vec();
        } else {
            let step = aa_step(q, &history, config).map_err(|e| match e {
                Error::Diverged { last_finite, .. } => Error::Diverged {
                    iteration: k + 1,
                    last_finite,
                },
                other => other,
            })?;
            let record = records.last_mut().expect("record pushed above");
            record.coefficients = step.coefficients;
            record.objective = Some(step.objective);
            x = step.next;
        }
        k += 1;
    };
    Ok(SolveTrace {
        records,
        termination,
    })
}

/// Runs AA(m) in residual coordinates for `q(x) = W x`.
///
/// Starting from the window `{x~0, x~1}`, each step takes `y` as the point of
/// minimum norm in the affine hull of the last `m_k + 1` vectors `x~` and sets
/// `x~new = W y`. Returns `||x~^(k)||` for `k = 0, ..., steps + 1`.
pub fn reformulated_aa_linear(
    w: &DMatrix<f64>,
    xtilde0: &[f64],
    xtilde1: &[f64],
    depth: usize,
    steps: usize,
) -> Result<Vec<f64>> {
    if depth == 0 {
        return Err(Error::Invalid("depth must be at least 1"));
    }
    let n = w.nrows();
    if !w.is_square() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w.ncols(),
        });
    }
    for v in [xtilde0, xtilde1] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
    }
    ensure_symmetric(w, 1e-12)?;

    let mut window: VecDeque<Vec<f64>> = VecDeque::with_capacity(depth + 1);
    window.push_back(xtilde0.to_vec());
    window.push_back(xtilde1.to_vec());
    let mut norms = vec![norm2(xtilde0), norm2(xtilde1)];
    for _ in 0..steps {
        let vs: Vec<&[f64]> = window.iter().map(|v| v.as_slice()).collect();
        let sol = aa_solve_subproblem(&vs, None, DEFAULT_SVD_CUTOFF)?;
        let y = DVector::from_vec(axpy_combination(&sol.coefficients, &vs));
        let next: Vec<f64> = (w * y).iter().cloned().collect();
        norms.push(norm2(&next));
        if window.len() == depth + 1 {
            window.pop_front();
        }
        window.push_back(next);
    }
    Ok(norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn linear(w: DMatrix<f64>) -> impl FixedPointOperator {
        let n = w.nrows();
        FnOperator::new(n, move |x: &[f64], out: &mut [f64]| {
            let y = &w * DVector::from_column_slice(x);
            out.copy_from_slice(y.as_slice());
        })
    }

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = SplitMix64::new(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
        let s = (&a + a.transpose()) * 0.5;
        let norm = s.clone().symmetric_eigen().eigenvalues.amax();
        s * (0.9 / norm)
    }

    #[test]
    fn subproblem_single_residual() {
        let sol = aa_solve_subproblem(&[[1.0, 2.0]], None, 1e-12).unwrap();
        assert_eq!(sol.coefficients, vec![1.0]);
        assert!((sol.objective - libm::sqrt(5.0)).abs() < 1e-15);
    }

    #[test]
    fn subproblem_symmetric_pair_gives_midpoint() {
        let sol = aa_solve_subproblem(&[[1.0, 0.0], [0.0, 1.0]], None, 1e-12).unwrap();
        assert!((sol.coefficients[0] - 0.5).abs() < 1e-15);
        assert!((sol.coefficients[1] - 0.5).abs() < 1e-15);
        assert!((sol.objective - libm::sqrt(2.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn subproblem_box_active() {
        let res = [[1.0, 0.0], [3.0, 0.0]];
        let free = aa_solve_subproblem(&res, None, 1e-12).unwrap();
        assert!((free.coefficients[0] - 1.5).abs() < 1e-12);
        assert!((free.coefficients[1] + 0.5).abs() < 1e-12);

        let boxed = aa_solve_subproblem(&res, Some(0.6), 1e-12).unwrap();
        assert!((boxed.coefficients[0] - 0.6).abs() < 1e-12);
        assert!((boxed.coefficients[1] - 0.4).abs() < 1e-12);
        // Oracle: scan alpha_0 over the feasible interval [0.4, 0.6].
        let scan_min = (0..=20_000)
            .map(|i| 0.4 + 0.2 * i as f64 / 20_000.0)
            .map(|a0| (a0 * 1.0 + (1.0 - a0) * 3.0).abs())
            .fold(f64::INFINITY, f64::min);
        assert!((boxed.objective - 1.8).abs() < 1e-12);
        assert!((boxed.objective - scan_min).abs() < 1e-12);
    }

    #[test]
    fn subproblem_infeasible_and_zero_window() {
        let res = [[1.0], [2.0], [3.0]];
        assert!(matches!(
            aa_solve_subproblem(&res, Some(0.3), 1e-12),
            Err(Error::Infeasible { .. })
        ));
        let zeros = [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        let sol = aa_solve_subproblem(&zeros, None, 1e-12).unwrap();
        assert_eq!(sol.coefficients, vec![0.0, 0.0, 1.0]);
        assert_eq!(sol.objective, 0.0);
        assert!(aa_solve_subproblem::<[f64; 1]>(&[], None, 1e-12).is_err());
    }

    #[test]
    fn subproblem_rank_deficient_window_is_stable() {
        // Collinear residuals: truncated SVD still returns a sum-to-one minimizer.
        let res = [[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let sol = aa_solve_subproblem(&res, None, 1e-12).unwrap();
        let s: f64 = sol.coefficients.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(sol.objective < 1e-12);
    }

    #[test]
    fn fp_scalar_contraction() {
        let q = FnOperator::new(1, |x: &[f64], out: &mut [f64]| out[0] = 0.5 * x[0]);
        let trace = fp_iterate(&q, &[1.0], 1e-12, 1000).unwrap();
        assert!(trace.converged());
        for (k, r) in trace.records.iter().enumerate() {
            assert_eq!(r.iterate[0], libm::pow(0.5, k as f64));
        }
        for pair in trace.records.windows(2) {
            assert!((pair[1].residual_norm / pair[0].residual_norm - 0.5).abs() < 1e-15);
        }
        assert!(trace.final_residual() <= 1e-12);
    }

    #[test]
    fn fp_at_fixed_point_stops_immediately() {
        let q = FnOperator::new(2, |x: &[f64], out: &mut [f64]| {
            out[0] = 0.3 * x[0];
            out[1] = 0.3 * x[1];
        });
        let trace = fp_iterate(&q, &[0.0, 0.0], 1e-12, 10).unwrap();
        assert_eq!(trace.iterations(), 0);
        assert!(trace.converged());
        let aa = aa_solve(&q, &[0.0, 0.0], &AAConfig::new(2)).unwrap();
        assert_eq!(aa.iterations(), 0);
        assert!(aa.converged());
    }

    #[test]
    fn fp_reports_divergence_with_last_finite_iterate() {
        let q = FnOperator::new(1, |x: &[f64], out: &mut [f64]| out[0] = x[0] * 1e200);
        match fp_iterate(&q, &[10.0], 1e-12, 10) {
            Err(Error::Diverged {
                iteration,
                last_finite,
            }) => {
                assert_eq!(iteration, 1);
                assert_eq!(last_finite, vec![10.0 * 1e200]);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn fp_hits_iteration_cap() {
        let q = FnOperator::new(1, |x: &[f64], out: &mut [f64]| out[0] = 0.99 * x[0]);
        let trace = fp_iterate(&q, &[1.0], 1e-12, 5).unwrap();
        assert_eq!(trace.termination, Termination::MaxIterations);
        assert_eq!(trace.iterations(), 5);
    }

    #[test]
    fn first_step_is_plain_image() {
        let w = random_symmetric(4, 11);
        let q = linear(w.clone());
        let x0 = [1.0, -2.0, 0.5, 3.0];
        let mut history = AAHistory::new(2);
        let mut g = vec![0.0; 4];
        q.evaluate(&x0, &mut g).unwrap();
        history.push(x0.to_vec(), g.clone());
        let step = aa_step(&q, &history, &AAConfig::new(2)).unwrap();
        assert_eq!(step.next, g);
        assert_eq!(step.coefficients, vec![1.0]);

        let damped = aa_step(&q, &history, &AAConfig::new(2).with_damping(0.25)).unwrap();
        for i in 0..4 {
            assert!((damped.next[i] - (0.25 * g[i] + 0.75 * x0[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_damping_combines_iterates_only() {
        let w = random_symmetric(5, 3);
        let q = linear(w.clone());
        let mut rng = SplitMix64::new(9);
        let mut history = AAHistory::new(3);
        for _ in 0..3 {
            let x = rng.normal_vec(5);
            let mut g = vec![0.0; 5];
            q.evaluate(&x, &mut g).unwrap();
            history.push(x, g);
        }
        let cfg = AAConfig::new(3).with_damping(0.0);
        let step = aa_step(&q, &history, &cfg).unwrap();
        let xs: Vec<&[f64]> = history.iterates().iter().map(|v| v.as_slice()).collect();
        let expected = axpy_combination(&step.coefficients, &xs);
        for (a, b) in step.next.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_step_commutes_with_combination() {
        let w = random_symmetric(5, 5);
        let q = linear(w.clone());
        let mut rng = SplitMix64::new(21);
        let mut history = AAHistory::new(1);
        for _ in 0..2 {
            let x = rng.normal_vec(5);
            let mut g = vec![0.0; 5];
            q.evaluate(&x, &mut g).unwrap();
            history.push(x, g);
        }
        let step = aa_step(&q, &history, &AAConfig::new(1)).unwrap();
        let xs: Vec<&[f64]> = history.iterates().iter().map(|v| v.as_slice()).collect();
        let mixed = DVector::from_vec(axpy_combination(&step.coefficients, &xs));
        let expected = &w * mixed;
        for (a, b) in step.next.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn damped_update_equals_undamped_on_blended_operator() {
        let beta = 0.7;
        let w = random_symmetric(5, 8);
        let blended = &w * beta + DMatrix::identity(5, 5) * (1.0 - beta);
        let q = linear(w.clone());
        let qb = linear(blended.clone());
        let mut rng = SplitMix64::new(4);
        let mut h = AAHistory::new(2);
        let mut hb = AAHistory::new(2);
        for _ in 0..3 {
            let x = rng.normal_vec(5);
            let mut g = vec![0.0; 5];
            q.evaluate(&x, &mut g).unwrap();
            h.push(x.clone(), g);
            let mut gb = vec![0.0; 5];
            qb.evaluate(&x, &mut gb).unwrap();
            hb.push(x, gb);
        }
        let damped = aa_step(&q, &h, &AAConfig::new(2).with_damping(beta)).unwrap();
        let plain = aa_step(&qb, &hb, &AAConfig::new(2)).unwrap();
        for (a, b) in damped.next.iter().zip(&plain.next) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn window_follows_min_m_k_plus_one() {
        let w = random_symmetric(6, 17);
        let q = linear(w);
        let mut rng = SplitMix64::new(1);
        let x0 = rng.normal_vec(6);
        let trace = aa_solve(&q, &x0, &AAConfig::new(2).with_tolerance(1e-14)).unwrap();
        for r in &trace.records {
            if r.coefficients.is_empty() {
                continue;
            }
            assert_eq!(r.coefficients.len(), r.k.min(2) + 1, "k = {}", r.k);
            let s: f64 = r.coefficients.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn counterexample_reduces_to_fixed_point_speed() {
        // W = Diag(w, -w) with (1 - w) u^2 = (1 + w) v^2 in residual coordinates.
        let w = 0.5;
        let q = linear(DMatrix::from_diagonal(&DVector::from_vec(vec![w, -w])));
        let xt0 = [libm::sqrt(3.0), 1.0];
        let x0 = [xt0[0] / (w - 1.0), xt0[1] / (-w - 1.0)];
        let trace = aa_solve(&q, &x0, &AAConfig::new(1).with_max_iterations(30)).unwrap();
        let norms = trace.residual_norms();
        for k in 1..norms.len().min(30) {
            assert!((norms[k] / norms[k - 1] - w).abs() < 1e-10, "k = {k}");
        }
        let reform = reformulated_aa_linear(
            &DMatrix::from_diagonal(&DVector::from_vec(vec![w, -w])),
            &xt0,
            &[w * xt0[0], -w * xt0[1]],
            1,
            20,
        )
        .unwrap();
        for k in 1..reform.len() {
            assert!((reform[k] / reform[k - 1] - w).abs() < 1e-10);
        }
    }

    #[test]
    fn reformulation_zero_operator() {
        let w = DMatrix::zeros(3, 3);
        let norms = reformulated_aa_linear(&w, &[1.0, 2.0, 3.0], &[0.5, 0.0, 1.0], 2, 1).unwrap();
        assert_eq!(norms.len(), 3);
        assert_eq!(norms[2], 0.0);
    }

    #[test]
    fn reformulation_rejects_asymmetric() {
        let w = DMatrix::from_row_slice(2, 2, &[0.1, 0.3, 0.0, 0.2]);
        assert!(matches!(
            reformulated_aa_linear(&w, &[1.0, 0.0], &[0.0, 1.0], 1, 3),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn reformulation_matches_solver_residuals() {
        for seed in 0..5 {
            let w = random_symmetric(5, 100 + seed);
            let q = linear(w.clone());
            let mut rng = SplitMix64::new(seed);
            let x0 = rng.normal_vec(5);
            for m in 1..=3 {
                let cfg = AAConfig::new(m)
                    .with_tolerance(1e-300)
                    .with_max_iterations(40);
                let trace = aa_solve(&q, &x0, &cfg).unwrap();
                let norms = trace.residual_norms();
                let xt0: Vec<f64> = ((&w - DMatrix::identity(5, 5))
                    * DVector::from_vec(x0.clone()))
                .iter()
                .cloned()
                .collect();
                let xt1: Vec<f64> = (&w * DVector::from_vec(xt0.clone()))
                    .iter()
                    .cloned()
                    .collect();
                let reform = reformulated_aa_linear(&w, &xt0, &xt1, m, norms.len() - 2).unwrap();
                for (a, b) in norms.iter().zip(&reform) {
                    assert!((a - b).abs() < 1e-10, "seed {seed} m {m}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(AAConfig::new(0).validate().is_err());
        assert!(AAConfig::new(1).with_damping(0.0).validate().is_err());
        assert!(AAConfig::new(1).with_damping(1.5).validate().is_err());
        assert!(AAConfig::new(1).with_tolerance(0.0).validate().is_err());
        assert!(AAConfig::modified(2).validate().is_ok());
        assert_eq!(AAConfig::modified(2).coeff_bound, Some(DEFAULT_COEFF_BOUND));
    }

    #[test]
    fn stagnation_exit_on_noise_floor() {
        // Deterministic 1e-9 noise keeps the residual well above the 1e-11 target.
        let q = FnOperator::new(1, |x: &[f64], out: &mut [f64]| {
            out[0] = 0.5 * x[0] + 1e-9 * libm::sin(x[0] * 1e15);
        });
        let cfg = AAConfig::new(1)
            .with_tolerance(1e-11)
            .with_max_iterations(10_000);
        let trace = aa_solve(&q, &[1.0], &cfg).unwrap();
        assert_eq!(trace.termination, Termination::Stagnated);
        assert!(trace.iterations() < 10_000);
    }
}
