//! Tyler's M-estimator experiments: solver comparison, Jacobian symmetry and
//! agreement of the two iterations.

use std::time::Instant;

use anderson_core::tyler::{frobenius_distance, tme_reference_weights};
use anderson_core::{
    aa_solve, deflated_tme_spectrum, estimate_r_factor, fp_iterate, jacobian_fd, sigma_from_w,
    symmetry_defect, tme_log_step, tme_standard_step, DMatrix, DVector, LogWeights, SolveTrace,
    SpectrumSummary, SplitMix64, TylerLogOperator, TylerProblem, TylerStandardOperator,
};
use anyhow::Context;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig};
use crate::data_io::read_data_csv;
use crate::method::Method;
use crate::report::{json_f64, median, CompareRow, ExperimentReport, JacobianRow, TmeBoundRow, TmeRow};

/// Label of the baseline: plain iteration of the standard shape map.
pub const STANDARD_FP: &str = "fp-standard";
/// Largest symmetry defect of the Jacobian at the fixed point.
pub const JACOBIAN_DEFECT_TOL: f64 = 1e-5;
/// Largest `|J 1 - 1|` entry.
pub const UNIT_ROW_TOL: f64 = 1e-6;
/// Largest Frobenius gap between the two iterations' shape matrices.
pub const COMPARE_TOL: f64 = 1e-8;
/// Pair rows whose older residual is below this multiple of
/// `eps * ||x~^(1)||` are exempt as roundoff.
pub const TME_FLOOR_FACTOR: f64 = 1e2;

/// Per-seed data, reference solution and deflated Jacobian spectrum.
pub struct SeedSetup {
    pub seed: u64,
    pub problem: TylerProblem,
    pub w_star: LogWeights,
    pub sigma_star: DMatrix<f64>,
    pub spectrum: anyhow::Result<SpectrumSummary>,
    pub jacobian: DMatrix<f64>,
}

pub fn load_problem(config: &ExperimentConfig, seed: u64) -> anyhow::Result<TylerProblem> {
    match &config.data.file {
        Some(path) => read_data_csv(path),
        None => Ok(config.data.model_spec(seed).generate()?),
    }
}

pub fn setup_seed(config: &ExperimentConfig, seed: u64) -> anyhow::Result<SeedSetup> {
    let problem = load_problem(config, seed)?;
    let w_star = tme_reference_weights(&problem, &LogWeights::zeros(problem.n()))
        .with_context(|| format!("reference solve for seed {seed}"))?;
    let sigma_star = sigma_from_w(&w_star, &problem, true)?.sigma;
    let jacobian = jacobian_fd(&TylerLogOperator::new(&problem), &w_star.w, config.fd_step)?;
    let spectrum = deflated_tme_spectrum(&jacobian).map_err(anyhow::Error::from);
    Ok(SeedSetup {
        seed,
        problem,
        w_star,
        sigma_star,
        spectrum,
        jacobian,
    })
}

/// Starting log weights for (`seed`, `init`): `n` standard normals.
pub fn initial_weights(seed: u64, init: usize, n: usize) -> Vec<f64> {
    let stream = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(init as u64 + 1);
    SplitMix64::new(stream).normal_vec(n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Solver {
    Log(Method),
    Standard,
}

impl Solver {
    fn label(&self) -> String {
        match self {
            Solver::Log(m) => m.to_string(),
            Solver::Standard => STANDARD_FP.to_string(),
        }
    }
}

struct RunOutcome {
    row: TmeRow,
    bound_rows: Vec<TmeBoundRow>,
    error: Option<String>,
}

fn shape_errors(trace: &SolveTrace, setup: &SeedSetup, solver: Solver) -> anyhow::Result<Vec<f64>> {
    let p = setup.problem.p();
    trace.records[1..]
        .iter()
        .map(|r| {
            let sigma = match solver {
                Solver::Log(_) => sigma_from_w(&LogWeights::new(r.iterate.clone())?, &setup.problem, true)?.sigma,
                Solver::Standard => DMatrix::from_column_slice(p, p, &r.iterate),
            };
            Ok(frobenius_distance(&sigma, &setup.sigma_star))
        })
        .collect()
}

fn run_one(config: &ExperimentConfig, setup: &SeedSetup, init: usize, solver: Solver) -> RunOutcome {
    let label = solver.label();
    let failed = |e: anyhow::Error| RunOutcome {
        row: TmeRow {
            seed: setup.seed,
            init,
            method: label.clone(),
            iterations: 0,
            wall_clock_s: f64::NAN,
            final_residual: f64::NAN,
            r_est_tail: f64::NAN,
        },
        bound_rows: Vec::new(),
        error: Some(format!("seed {} init {init} {label}: {e:#}", setup.seed)),
    };
    let prob = &setup.problem;
    let w0 = initial_weights(setup.seed, init, prob.n());
    let start = Instant::now();
    let trace = match solver {
        Solver::Log(m) => {
            let op = TylerLogOperator::new(prob);
            match m.aa_config(config.tolerance, config.max_iterations) {
                Some(c) => aa_solve(&op, &w0, &c.with_keep_iterates(true)),
                None => fp_iterate(&op, &w0, config.tolerance, config.max_iterations),
            }
        }
        Solver::Standard => match sigma_from_w(&LogWeights { w: w0 }, prob, true) {
            Ok(s0) => fp_iterate(
                &TylerStandardOperator::new(prob),
                s0.sigma.as_slice(),
                config.tolerance,
                config.max_iterations,
            ),
            Err(e) => Err(e),
        },
    };
    let elapsed = start.elapsed().as_secs_f64();
    let trace = match trace {
        Ok(t) => t,
        Err(e) => return failed(e.into()),
    };
    let errors = match shape_errors(&trace, setup, solver) {
        Ok(e) => e,
        Err(e) => return failed(e),
    };
    let r_est_tail = estimate_r_factor(&errors).last().copied().unwrap_or(f64::NAN);

    let mut bound_rows = Vec::new();
    if let (Solver::Log(m), Ok(spec)) = (solver, &setup.spectrum) {
        if m.is_anderson() && m.coeff_bound().is_some() {
            bound_rows = pair_rows(config, setup.seed, init, &label, &trace.residual_norms(), spec);
        }
    }
    RunOutcome {
        row: TmeRow {
            seed: setup.seed,
            init,
            method: label,
            iterations: trace.iterations(),
            wall_clock_s: if config.record_wall_clock { elapsed } else { 0.0 },
            final_residual: trace.final_residual(),
            r_est_tail,
        },
        bound_rows,
        error: None,
    }
}

/// `||x~^(k+1)|| / ||x~^(k-1)||` for every `k >= 2` whose older residual
/// comes at or after the first residual below the threshold.
fn pair_rows(
    config: &ExperimentConfig,
    seed: u64,
    init: usize,
    label: &str,
    residuals: &[f64],
    spectrum: &SpectrumSummary,
) -> Vec<TmeBoundRow> {
    let Some(first) = residuals.iter().position(|&r| r < config.tme_bound_threshold) else {
        return Vec::new();
    };
    let rhs = spectrum.pair_bound() * config.tme_bound_slack;
    let floor_level = TME_FLOOR_FACTOR * f64::EPSILON * residuals.get(1).copied().unwrap_or(0.0);
    let start = (first + 1).max(2);
    (start..residuals.len().saturating_sub(1))
        .map(|k| {
            let lhs = residuals[k + 1] / residuals[k - 1];
            TmeBoundRow {
                seed,
                init,
                method: label.to_string(),
                k,
                lhs,
                rhs,
                satisfied: lhs <= rhs,
                floor: residuals[k - 1] <= floor_level,
            }
        })
        .collect()
}

fn setups(config: &ExperimentConfig) -> anyhow::Result<Vec<SeedSetup>> {
    config.seeds.par_iter().map(|&s| setup_seed(config, s)).collect()
}

/// AA(m) and plain iteration on the log weights plus plain iteration on the
/// shape matrix, for every (seed, init).
pub fn run_tme(config: &ExperimentConfig) -> anyhow::Result<ExperimentReport> {
    config.validate()?;
    let methods = config.parsed_methods()?;
    let setups = setups(config)?;
    let mut solvers: Vec<Solver> = methods.iter().map(|m| Solver::Log(*m)).collect();
    solvers.push(Solver::Standard);
    let mut jobs: Vec<(usize, usize, Solver)> = Vec::new();
    for s in 0..setups.len() {
        for i in 0..config.inits {
            jobs.extend(solvers.iter().map(|&v| (s, i, v)));
        }
    }
    let outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(s, init, solver)| run_one(config, &setups[s], init, solver))
        .collect();

    let mut tme = Vec::with_capacity(outcomes.len());
    let mut tme_bound = Vec::new();
    let mut errors = Vec::new();
    for o in outcomes {
        tme.push(o.row);
        tme_bound.extend(o.bound_rows);
        errors.extend(o.error);
    }
    let bound_violations = tme_bound.iter().filter(|r| r.is_violation()).count();
    let violations = bound_violations + errors.len();

    let baseline: std::collections::HashMap<(u64, usize), usize> = tme
        .iter()
        .filter(|r| r.method == STANDARD_FP && !r.final_residual.is_nan())
        .map(|r| ((r.seed, r.init), r.iterations))
        .collect();
    let mut per_method = serde_json::Map::new();
    let mut labels: Vec<String> = methods.iter().map(|m| m.to_string()).collect();
    labels.push(STANDARD_FP.to_string());
    for label in &labels {
        let rows: Vec<&TmeRow> = tme.iter().filter(|r| &r.method == label).collect();
        let ok: Vec<&&TmeRow> = rows.iter().filter(|r| r.final_residual <= config.tolerance).collect();
        let its: Vec<f64> = rows.iter().map(|r| r.iterations as f64).collect();
        let fewer = rows
            .iter()
            .filter(|r| {
                r.final_residual <= config.tolerance
                    && baseline.get(&(r.seed, r.init)).is_some_and(|&b| r.iterations < b)
            })
            .count();
        let bounds: Vec<&TmeBoundRow> = tme_bound.iter().filter(|r| &r.method == label).collect();
        let live: Vec<&&TmeBoundRow> = bounds.iter().filter(|r| !r.floor).collect();
        per_method.insert(
            label.clone(),
            json!({
                "runs": rows.len(),
                "converged": ok.len(),
                "median_iterations": json_f64(median(&its)),
                "median_wall_clock_s": json_f64(median(&rows.iter().map(|r| r.wall_clock_s).collect::<Vec<_>>())),
                "median_r_est_tail": json_f64(median(&rows.iter().map(|r| r.r_est_tail).collect::<Vec<_>>())),
                "fraction_fewer_iterations_than_fp_standard": json_f64(fewer as f64 / rows.len().max(1) as f64),
                "bound_rows": bounds.len(),
                "bound_floor_rows": bounds.len() - live.len(),
                "bound_violations": bounds.iter().filter(|r| r.is_violation()).count(),
                "max_bound_lhs_over_rhs": json_f64(live.iter().map(|r| r.lhs / r.rhs).fold(f64::NEG_INFINITY, f64::max)),
            }),
        );
    }
    let spectra: Vec<serde_json::Value> = setups
        .iter()
        .map(|s| match &s.spectrum {
            Ok(sp) => json!({
                "seed": s.seed,
                "lambda_min": sp.lambda_min,
                "lambda_max": sp.lambda_max,
                "op_norm": sp.op_norm,
                "w0": sp.w0,
                "rate_bound": sp.rate_bound,
            }),
            Err(e) => json!({"seed": s.seed, "error": format!("{e:#}")}),
        })
        .collect();
    Ok(ExperimentReport {
        experiment: Some(Experiment::TmeRun),
        tme,
        tme_bound,
        summary: json!({
            "experiment": "tme-run",
            "model": config.data.model,
            "p": setups.first().map(|s| s.problem.p()),
            "n": setups.first().map(|s| s.problem.n()),
            "seeds": config.seeds.len(),
            "inits": config.inits,
            "tolerance": config.tolerance,
            "bound_threshold": config.tme_bound_threshold,
            "bound_slack": config.tme_bound_slack,
            "methods": per_method,
            "spectra": spectra,
            "failed_runs": errors,
            "violations": violations,
        }),
        violations,
        ..Default::default()
    })
}

/// Finite-difference Jacobian of the log map at the reference fixed point.
pub fn run_tme_jacobian(config: &ExperimentConfig) -> anyhow::Result<ExperimentReport> {
    config.validate()?;
    let setups = setups(config)?;
    let mut jacobian = Vec::new();
    let mut violations = 0;
    let mut problems = Vec::new();
    for s in &setups {
        let n = s.problem.n();
        let ones = DVector::from_element(n, 1.0);
        let unit = (&s.jacobian * &ones - &ones).abs().max();
        let defect = symmetry_defect(&s.jacobian);
        let spec = match &s.spectrum {
            Ok(sp) => *sp,
            Err(e) => {
                problems.push(format!("seed {}: {e:#}", s.seed));
                violations += 1;
                SpectrumSummary {
                    lambda_min: f64::NAN,
                    lambda_max: f64::NAN,
                    op_norm: f64::NAN,
                    w0: f64::NAN,
                    rate_bound: f64::NAN,
                }
            }
        };
        if !(defect <= JACOBIAN_DEFECT_TOL) || !(unit <= UNIT_ROW_TOL) || !(spec.op_norm < 1.0) {
            violations += 1;
        }
        jacobian.push(JacobianRow {
            seed: s.seed,
            symmetry_defect: defect,
            unit_row_error: unit,
            lambda_min: spec.lambda_min,
            lambda_max: spec.lambda_max,
            op_norm: spec.op_norm,
            w0: spec.w0,
            rate_bound: spec.rate_bound,
        });
    }
    let defects: Vec<f64> = jacobian.iter().map(|r| r.symmetry_defect).collect();
    Ok(ExperimentReport {
        experiment: Some(Experiment::TmeJacobian),
        summary: json!({
            "experiment": "tme-jacobian",
            "seeds": config.seeds.len(),
            "fd_step": config.fd_step,
            "mean_symmetry_defect": json_f64(defects.iter().sum::<f64>() / defects.len().max(1) as f64),
            "max_symmetry_defect": json_f64(defects.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
            "max_unit_row_error": json_f64(jacobian.iter().map(|r| r.unit_row_error).fold(f64::NEG_INFINITY, f64::max)),
            "problems": problems,
            "violations": violations,
        }),
        jacobian,
        violations,
        ..Default::default()
    })
}

/// Steps the log and standard iterations side by side from matched starts
/// and records the Frobenius gap between their trace-normalized shapes.
pub fn run_tme_compare(config: &ExperimentConfig) -> anyhow::Result<ExperimentReport> {
    config.validate()?;
    let per_seed: Vec<anyhow::Result<Vec<CompareRow>>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let prob = load_problem(config, seed)?;
            let mut w = LogWeights::new(initial_weights(seed, 0, prob.n()))?;
            let mut sigma = sigma_from_w(&w, &prob, true)?;
            let mut rows = Vec::with_capacity(config.steps);
            for k in 1..=config.steps {
                w = tme_log_step(&w, &prob)?;
                sigma = tme_standard_step(&sigma, &prob)?;
                let image = sigma_from_w(&w, &prob, true)?;
                rows.push(CompareRow {
                    seed,
                    k,
                    frobenius_gap: frobenius_distance(&image.sigma, &sigma.sigma),
                });
            }
            Ok(rows)
        })
        .collect();
    let mut compare = Vec::new();
    for rows in per_seed {
        compare.extend(rows?);
    }
    let violations = compare.iter().filter(|r| !(r.frobenius_gap <= COMPARE_TOL)).count();
    let max_gap = compare.iter().map(|r| r.frobenius_gap).fold(0.0_f64, f64::max);
    Ok(ExperimentReport {
        experiment: Some(Experiment::TmeCompare),
        summary: json!({
            "experiment": "tme-compare",
            "seeds": config.seeds.len(),
            "steps": config.steps,
            "max_frobenius_gap": json_f64(max_gap),
            "violations": violations,
        }),
        compare,
        violations,
        ..Default::default()
    })
}
