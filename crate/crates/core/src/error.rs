use alloc::string::String;
use core::fmt;

/// Errors raised by the solver core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    DimensionMismatch { expected: usize, found: usize },
    NonFinite,
    NonPositive(&'static str),
    InvalidParameter(String),
    UnsupportedExponent,
    IncompatibleTags(&'static str),
    NonDifferentiablePhi,
    MissingConstant(&'static str),
    MissingReference,
    NotStrictlyFeasible,
    InnerIterationCap { iterations: usize, residual: f64 },
    BacktrackingCap { trials: usize },
    Divergence { iteration: usize, norm: f64 },
    InvariantViolated { what: &'static str, iteration: usize, slack: f64 },
    WeightCondition { column: usize },
    EmptyInput(&'static str),
    DegenerateWindow,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NonFinite => write!(f, "non-finite entry in input vector"),
            Error::NonPositive(what) => write!(f, "{what} must be positive"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::UnsupportedExponent => write!(f, "unsupported norm exponent (expected 1, 2 or inf)"),
            Error::IncompatibleTags(msg) => write!(f, "incompatible oracle tags: {msg}"),
            Error::NonDifferentiablePhi => {
                write!(f, "operation requires a differentiable or linear Phi")
            }
            Error::MissingConstant(name) => write!(f, "missing {name}"),
            Error::MissingReference => write!(f, "reference saddle point required"),
            Error::NotStrictlyFeasible => {
                write!(f, "reference point is not strictly feasible")
            }
            Error::InnerIterationCap { iterations, residual } => write!(
                f,
                "inner solver hit its iteration cap ({iterations}) with residual {residual:e}"
            ),
            Error::BacktrackingCap { trials } => write!(
                f,
                "backtracking failed after {trials} shrinks; oracle constants look ill-posed"
            ),
            Error::Divergence { iteration, norm } => {
                write!(f, "iterate norm {norm:e} exceeded the divergence guard at iteration {iteration}")
            }
            Error::InvariantViolated { what, iteration, slack } => {
                write!(f, "{what} violated at iteration {iteration} (slack {slack:e})")
            }
            Error::WeightCondition { column } => write!(
                f,
                "weight condition omega_j >= sum_i Q_ij violated at column {column}"
            ),
            Error::EmptyInput(what) => write!(f, "{what} is empty"),
            Error::DegenerateWindow => write!(f, "rate-fit window has fewer than two usable points"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
