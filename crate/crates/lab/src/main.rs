use std::path::PathBuf;
use std::process::ExitCode;

use anderson_lab::config::{Experiment, ExperimentConfig, Model};
use anderson_lab::data_io::write_data_csv;
use anderson_lab::method::{parse_methods, Method};
use anderson_lab::tme::load_problem;
use anyhow::Context;
use clap::Parser;

/// Runs Anderson acceleration experiments and writes CSV tables plus a JSON
/// summary. Exits with status 1 when any invariant is violated.
#[derive(Debug, Parser)]
#[command(name = "anderson-lab", version)]
struct Cli {
    /// linear-bound, linear-rate, scalar-tight, tme-run, tme-jacobian,
    /// tme-compare or w0-table.
    #[arg(long)]
    experiment: Option<Experiment>,
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use seeds 0..N.
    #[arg(long)]
    seed_count: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Methods such as fp, aa2, aa3:c0=1e4, aa1:beta=0.7 (repeat or comma-separate).
    #[arg(long)]
    method: Vec<String>,
    /// Run a single AA(m) method with this depth.
    #[arg(long)]
    m: Option<usize>,
    /// Box bound on AA coefficients, applied to every AA method.
    #[arg(long)]
    c0: Option<f64>,
    /// Damping, applied to every AA method.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Data dimension (model 1).
    #[arg(long)]
    p: Option<usize>,
    /// Number of data points (model 1).
    #[arg(long)]
    n: Option<usize>,
    /// model1 or model2.
    #[arg(long)]
    model: Option<Model>,
    /// Read the data matrix from this file instead of generating it.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Write the generated data matrix of the first seed to this file.
    #[arg(long)]
    save_data: Option<PathBuf>,
    /// Write zero instead of measured wall-clock times.
    #[arg(long)]
    no_timing: bool,
}

fn build_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let fallback = cli.experiment.unwrap_or(Experiment::LinearBound);
    let mut c = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path, fallback)?,
        None => ExperimentConfig::for_experiment(fallback),
    };
    if let Some(e) = cli.experiment {
        c.experiment = e;
    }
    if let Some(k) = cli.seed_count {
        c.seeds = (0..k).collect();
    }
    let mut methods: Vec<Method> = if !cli.method.is_empty() {
        parse_methods(&cli.method)?
    } else if let Some(m) = cli.m {
        vec![Method::aa(m)]
    } else {
        c.parsed_methods()?
    };
    if cli.c0.is_some() || cli.beta.is_some() {
        methods = methods.into_iter().map(|m| m.with_overrides(cli.c0, cli.beta)).collect();
    }
    c.methods = methods.iter().map(|m| m.to_string()).collect();
    if let Some(t) = cli.tol {
        c.tolerance = t;
    }
    if let Some(k) = cli.max_iter {
        c.max_iterations = k;
    }
    if let Some(p) = cli.p {
        c.data.p = p;
    }
    if let Some(n) = cli.n {
        c.data.n = n;
    }
    if let Some(m) = cli.model {
        c.data.model = m;
    }
    if let Some(d) = &cli.data {
        c.data.file = Some(d.clone());
    }
    if cli.no_timing {
        c.record_wall_clock = false;
    }
    c.validate()?;
    Ok(c)
}

fn real_main() -> anyhow::Result<usize> {
    let cli = Cli::parse();
    let config = build_config(&cli)?;
    if let Some(path) = &cli.save_data {
        let seed = config.seeds.first().copied().unwrap_or(0);
        write_data_csv(path, &load_problem(&config, seed)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let report = anderson_lab::run(&config)?;
    let written = report.write_to(&cli.out)?;
    std::fs::write(
        cli.out.join("config.json"),
        serde_json::to_string_pretty(&config)? + "\n",
    )?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    println!("{}: {} violation(s)", config.experiment, report.violations);
    Ok(report.violations)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
