//! Experiments on linear symmetric operators and on the w0 bound itself.

use anderson_core::theory::check_pairwise_bound;
use anderson_core::{
    aa_solve, aa_solve_from, compute_w0, estimate_r_factor, fp_iterate, make_tight_init_scalar,
    reformulated_aa_linear, DMatrix, LinearSymmetricOperator, SolveTrace, SplitMix64,
};
use anyhow::Context;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig};
use crate::method::Method;
use crate::report::{json_f64, median, BoundRow, ExperimentReport, RateRow, TightRow, W0Row};

/// Starting iterate for `seed`: `n` standard normals.
pub fn initial_point(seed: u64, n: usize) -> Vec<f64> {
    SplitMix64::new(seed).normal_vec(n)
}

fn solve(op: &LinearSymmetricOperator, method: &Method, x0: &[f64], config: &ExperimentConfig) -> anyhow::Result<SolveTrace> {
    let trace = match method.aa_config(config.tolerance, config.max_iterations) {
        Some(c) => aa_solve(op, x0, &c)?,
        None => fp_iterate(op, x0, config.tolerance, config.max_iterations)?,
    };
    Ok(trace)
}

fn jobs(config: &ExperimentConfig) -> anyhow::Result<Vec<(u64, Method)>> {
    let methods = config.parsed_methods()?;
    Ok(config
        .seeds
        .iter()
        .flat_map(|&s| methods.iter().map(move |m| (s, *m)))
        .collect())
}

/// Pairwise-improvement table for every (seed, method). Damped methods are
/// checked against `beta W + (1 - beta) I`. Only AA rows count as violations.
pub fn run_linear_bound(config: &ExperimentConfig) -> anyhow::Result<ExperimentReport> {
    config.validate()?;
    let op = config.operator.build()?;
    op.fixed_point().context("operator has no fixed point")?;
    let n = op.matrix().nrows();
    let jobs = jobs(config)?;

    let per_job: Vec<anyhow::Result<Vec<BoundRow>>> = jobs
        .par_iter()
        .map(|&(seed, method)| {
            let x0 = initial_point(seed, n);
            let trace = solve(&op, &method, &x0, config)?;
            let checked = op.blended(method.damping());
            let rows = check_pairwise_bound(&trace, checked.matrix(), checked.offset().as_slice())?;
            let label = method.to_string();
            Ok(rows
                .into_iter()
                .map(|r| BoundRow {
                    seed,
                    method: label.clone(),
                    k: r.k,
                    lhs: r.lhs,
                    rhs: r.rhs,
                    satisfied: r.satisfied,
                    floor: r.floor,
                })
                .collect())
        })
        .collect();
    let mut bound = Vec::new();
    for rows in per_job {
        bound.extend(rows?);
    }

    let methods = config.parsed_methods()?;
    let mut per_method = serde_json::Map::new();
    let mut violations = 0;
    for m in &methods {
        let label = m.to_string();
        let rows: Vec<&BoundRow> = bound.iter().filter(|r| r.method == label).collect();
        let live: Vec<&&BoundRow> = rows.iter().filter(|r| !r.floor).collect();
        let v = rows.iter().filter(|r| r.is_violation()).count();
        if m.is_anderson() {
            violations += v;
        }
        let max_ratio = live.iter().map(|r| r.lhs / r.rhs).fold(f64::NEG_INFINITY, f64::max);
        let min_gap = live.iter().map(|r| r.rhs - r.lhs).fold(f64::INFINITY, f64::min);
        let min_rel_gap = live.iter().map(|r| (r.rhs - r.lhs) / r.rhs).fold(f64::INFINITY, f64::min);
        per_method.insert(
            label,
            json!({
                "rows": rows.len(),
                "floor_rows": rows.len() - live.len(),
                "violations": v,
                "checked": m.is_anderson(),
                "rhs": json_f64(rows.first().map(|r| r.rhs).unwrap_or(f64::NAN)),
                "max_lhs_over_rhs": json_f64(max_ratio),
                "min_gap": json_f64(min_gap),
                "min_relative_gap": json_f64(min_rel_gap),
            }),
        );
    }
    let s = op.spectrum()?;
    Ok(ExperimentReport {
        experiment: Some(Experiment::LinearBound),
        bound,
        summary: json!({
            "experiment": "linear-bound",
            "seeds": config.seeds.len(),
            "lambda_min": s.lambda_min,
            "lambda_max": s.lambda_max,
            "op_norm": s.op_norm,
            "w0": s.w0,
            "methods": per_method,
            "violations": violations,
        }),
        violations,
        ..Default::default()
    })
}

/// Error norms `||x^(k) - x*||` for `k >= 1` and their r-factor estimates.
pub fn run_linear_rate(config: &ExperimentConfig) -> anyhow::Result<ExperimentReport> {
    config.validate()?;
    let op = config.operator.build()?;
    let x_star = op.fixed_point().context("operator has no fixed point")?;
    let n = x_star.len();
    let spectrum = op.spectrum()?;
    let jobs = jobs(config)?;

    let per_job: Vec<anyhow::Result<(Vec<RateRow>, f64, usize)>> = jobs
        .par_iter()
        .map(|&(seed, method)| {
            let x0 = initial_point(seed, n);
            let trace = solve(&op, &method, &x0, config)?;
            let errors: Vec<f64> = trace.records[1..]
                .iter()
                .map(|r| {
                    r.iterate
                        .iter()
                        .zip(&x_star)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            let r_est = estimate_r_factor(&errors);
            let tail = r_est.last().copied().unwrap_or(f64::NAN);
            let label = method.to_string();
            let rows = errors
                .iter()
                .zip(&r_est)
                .enumerate()
                .map(|(i, (&e, &r))| RateRow {
                    seed,
                    method: label.clone(),
                    k: i + 1,
                    error_norm: e,
                    r_est: r,
                })
                .collect();
            Ok((rows, tail, trace.iterations()))
        })
        .collect();

    let mut rate = Vec::new();
    let mut tails: Vec<(u64, Method, f64, usize)> = Vec::new();
    for ((seed, method), res) in jobs.iter().zip(per_job) {
        let (rows, tail, its) = res?;
        rate.extend(rows);
        tails.push((*seed, *method, tail, its));
    }

    let methods = config.parsed_methods()?;
    let mut per_method = serde_json::Map::new();
    let mut violations = 0;
    for m in &methods {
        let mine: Vec<&(u64, Method, f64, usize)> = tails.iter().filter(|t| t.1 == *m).collect();
        let t: Vec<f64> = mine.iter().map(|t| t.2).collect();
        let its: Vec<f64> = mine.iter().map(|t| t.3 as f64).collect();
        let over = if m.is_anderson() {
            let b = if m.damping() != 1.0 {
                op.blended(m.damping()).spectrum()?.rate_bound
            } else {
                spectrum.rate_bound
            };
            t.iter().filter(|&&v| v > b + config.rate_slack).count()
        } else {
            0
        };
        violations += over;
        per_method.insert(
            m.to_string(),
            json!({
                "runs": t.len(),
                "median_r_est_tail": json_f64(median(&t)),
                "max_r_est_tail": json_f64(t.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
                "min_r_est_tail": json_f64(t.iter().cloned().fold(f64::INFINITY, f64::min)),
                "median_iterations": json_f64(median(&its)),
                "above_rate_bound": over,
            }),
        );
    }
    Ok(ExperimentReport {
        experiment: Some(Experiment::LinearRate),
        rate,
        summary: json!({
            "experiment": "linear-rate",
            "seeds": config.seeds.len(),
            "op_norm": spectrum.op_norm,
            "w0": spectrum.w0,
            "rate_bound": spectrum.rate_bound,
            "rate_slack": config.rate_slack,
            "methods": per_method,
            "violations": violations,
        }),
        violations,
        ..Default::default()
    })
}

/// Tolerance on the tight scalar ratio.
pub const TIGHT_TOL: f64 = 1e-8;

/// AA(1) on `W = w I` from the tight starting pair: every pair ratio should
/// equal `w^2 / (2 - w)`.
pub fn run_scalar_tight(config: &ExperimentConfig) -> anyhow::Result<ExperimentReport> {
    config.validate()?;
    let w = config.scalar_w;
    let wm = DMatrix::identity(2, 2) * w;
    let (xt0, xt1) = make_tight_init_scalar(w);
    let norms = reformulated_aa_linear(&wm, &xt0, &xt1, 1, config.steps)?;
    let target = w * w / (2.0 - w);
    let tight: Vec<TightRow> = (2..norms.len() - 1)
        .map(|k| {
            let ratio = norms[k + 1] / norms[k - 1];
            TightRow {
                k,
                ratio,
                target,
                abs_error: (ratio - target).abs(),
            }
        })
        .collect();
    let violations = tight.iter().filter(|r| !(r.abs_error <= TIGHT_TOL)).count();

    // Cross-check with the solver: x = x~ / (w - 1) for W = w I.
    let x0: Vec<f64> = xt0.iter().map(|v| v / (w - 1.0)).collect();
    let x1: Vec<f64> = xt1.iter().map(|v| v / (w - 1.0)).collect();
    let op = anderson_core::make_diag_operator(&[w, w], &[0.0, 0.0])?;
    let solver = aa_solve_from(
        &op,
        &[&x0, &x1],
        &anderson_core::AAConfig::new(1)
            .with_tolerance(f64::MIN_POSITIVE)
            .with_max_iterations(config.steps + 1),
    )?;
    let deviation = solver
        .residual_norms()
        .iter()
        .zip(&norms)
        .map(|(a, b)| (a - b).abs() / b.max(f64::MIN_POSITIVE))
        .fold(0.0_f64, f64::max);

    Ok(ExperimentReport {
        experiment: Some(Experiment::ScalarTight),
        tight,
        summary: json!({
            "experiment": "scalar-tight",
            "w": w,
            "w0": anderson_core::scalar_w0(w),
            "target_ratio": target,
            "steps": config.steps,
            "solver_max_relative_deviation": json_f64(deviation),
            "violations": violations,
        }),
        violations,
        ..Default::default()
    })
}

/// `w0` on a uniform `grid_points x grid_points` grid over `(-0.95, 0.95)^2`
/// (rows with `lambda_min <= lambda_max`).
pub fn run_w0_table(config: &ExperimentConfig) -> anyhow::Result<ExperimentReport> {
    config.validate()?;
    let g = config.grid_points;
    let axis: Vec<f64> = (0..g).map(|i| -0.95 + 1.9 * i as f64 / (g - 1) as f64).collect();
    let pairs: Vec<(f64, f64)> = axis
        .iter()
        .flat_map(|&lo| axis.iter().filter(move |&&hi| hi >= lo).map(move |&hi| (lo, hi)))
        .collect();
    let rows: Vec<W0Row> = pairs
        .par_iter()
        .map(|&(lo, hi)| -> anyhow::Result<W0Row> {
            let w0 = compute_w0(lo, hi)?;
            let op_norm = lo.abs().max(hi.abs());
            Ok(W0Row {
                lambda_min: lo,
                lambda_max: hi,
                w0,
                op_norm,
                rate_bound: (w0 * op_norm).sqrt(),
                equality_flag: (lo + hi).abs() < 1e-12,
            })
        })
        .collect::<anyhow::Result<_>>()?;
    let bad = |r: &W0Row| {
        r.w0 > r.op_norm + 1e-12
            || (r.equality_flag && (r.w0 - r.op_norm).abs() > 1e-9)
            || ((r.lambda_min + r.lambda_max).abs() >= 0.05 && r.w0 > r.op_norm - 1e-6)
    };
    let violations = rows.iter().filter(|r| bad(r)).count();
    let max_excess = rows.iter().map(|r| r.w0 - r.op_norm).fold(f64::NEG_INFINITY, f64::max);
    Ok(ExperimentReport {
        experiment: Some(Experiment::W0Table),
        summary: json!({
            "experiment": "w0-table",
            "grid_points": g,
            "rows": rows.len(),
            "equality_rows": rows.iter().filter(|r| r.equality_flag).count(),
            "max_w0_minus_norm": json_f64(max_excess),
            "violations": violations,
        }),
        w0: rows,
        violations,
        ..Default::default()
    })
}
