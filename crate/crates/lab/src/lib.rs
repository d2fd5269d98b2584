//! Experiment drivers for `anderson-core`: configuration, CSV/JSON reports,
//! data files and the runners behind the `anderson-lab` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data_io;
pub mod linear;
pub mod method;
pub mod report;
pub mod tme;

pub use config::{DataSpec, Experiment, ExperimentConfig, Model, OperatorSpec};
pub use linear::{run_linear_bound, run_linear_rate, run_scalar_tight, run_w0_table};
pub use method::Method;
pub use report::ExperimentReport;
pub use tme::{run_tme, run_tme_compare, run_tme_jacobian};

/// Runs the experiment named in `config`.
pub fn run(config: &ExperimentConfig) -> anyhow::Result<ExperimentReport> {
    match config.experiment {
        Experiment::LinearBound => run_linear_bound(config),
        Experiment::LinearRate => run_linear_rate(config),
        Experiment::ScalarTight => run_scalar_tight(config),
        Experiment::TmeRun => run_tme(config),
        Experiment::TmeJacobian => run_tme_jacobian(config),
        Experiment::TmeCompare => run_tme_compare(config),
        Experiment::W0Table => run_w0_table(config),
    }
}
