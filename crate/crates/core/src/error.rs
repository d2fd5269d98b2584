use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the solvers, operators and estimators in this crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The operator produced a non-finite value. Carries the last finite iterate.
    Diverged {
        iteration: usize,
        last_finite: Vec<f64>,
    },
    /// The coefficient box `|alpha_j| <= c0` cannot meet `sum alpha_j = 1`.
    Infeasible { c0: f64, window: usize },
    /// Relative asymmetry above the accepted threshold.
    NotSymmetric { defect: f64 },
    /// Spectrum endpoints or sampling ranges outside the admissible domain.
    BadSpectrum,
    /// `I - W` is singular, so the fixed point is not unique.
    NotContractive,
    /// Vector or matrix shapes do not agree.
    DimensionMismatch { expected: usize, found: usize },
    /// Shape matrix not numerically positive definite.
    SingularShape,
    /// Weighted scatter matrix not numerically positive definite.
    SingularScatter,
    /// A quadratic form `x^T S^-1 x` came out non-positive.
    LostPositivity { index: usize },
    /// No eigenpair of the Jacobian looks like the scale mode.
    NoScaleMode,
    /// Symmetric matrix with a negative eigenvalue beyond tolerance.
    NotPositiveSemidefinite { min_eigenvalue: f64 },
    /// Invalid configuration or input.
    Invalid(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Diverged { iteration, .. } => {
                write!(f, "diverged: non-finite value at iteration {iteration}")
            }
            Error::Infeasible { c0, window } => {
                write!(f, "infeasible: coefficient bound {c0} is below 1/{window}")
            }
            Error::NotSymmetric { defect } => {
                write!(f, "not symmetric: relative defect {defect:e}")
            }
            Error::BadSpectrum => f.write_str("bad spectrum"),
            Error::NotContractive => f.write_str("not contractive: I - W is singular"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::SingularShape => f.write_str("singular shape"),
            Error::SingularScatter => f.write_str("singular scatter"),
            Error::LostPositivity { index } => {
                write!(f, "lost positivity at data point {index}")
            }
            Error::NoScaleMode => f.write_str("no scale mode found"),
            Error::NotPositiveSemidefinite { min_eigenvalue } => write!(
                f,
                "not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}"
            ),
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
extern crate std;

#[cfg(feature = "std")]
impl std::error::Error for Error {}
