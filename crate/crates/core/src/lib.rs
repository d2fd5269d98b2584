//! Anderson acceleration for fixed-point problems with symmetric (Jacobian)
//! structure, Tyler's M-estimation, and computable convergence-factor theory.
//!
//! The crate is `no_std` and only needs `alloc`. Experiment drivers, file
//! formats and the command-line front end live in `anderson-lab`.

#![no_std]
// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod anderson;
pub mod datagen;
pub mod error;
mod linalg;
pub mod operators;
pub mod rng;
pub mod theory;
pub mod tyler;

pub use anderson::{
    aa_solve, aa_solve_from, aa_solve_observed, aa_solve_subproblem, aa_step, fp_iterate,
    fp_iterate_observed, reformulated_aa_linear, AAConfig, AAHistory, FixedPointOperator,
    FnOperator, IterationRecord, SolveTrace, StepOutput, SubproblemSolution, Termination,
};
pub use datagen::{gen_data_model_1, gen_data_model_2, matrix_sqrt_psd, sp_matrix, DataModelSpec};
pub use error::{Error, Result};
pub use linalg::relative_asymmetry;
pub use nalgebra::{DMatrix, DVector};
pub use operators::{make_diag_operator, make_random_symmetric, LinearSymmetricOperator};
pub use rng::SplitMix64;
pub use theory::{
    check_pairwise_bound, compute_w0, estimate_r_factor, make_counterexample_init,
    make_tight_init_scalar, scalar_w0, spectrum_of, w0_objective, PairwiseRow, SpectrumSummary,
};
pub use tyler::{
    check_tyler_necessary_conditions, deflated_tme_spectrum, jacobian_fd, sigma_from_w,
    symmetry_defect, tme_log_step, tme_standard_step, LogWeights, NecessaryConditionsReport,
    ShapeMatrix, TylerLogOperator, TylerProblem, TylerStandardOperator,
};
