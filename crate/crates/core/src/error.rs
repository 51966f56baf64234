//! Error type shared by all operations.

use alloc::string::String;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Bad call arguments (step sizes, grids, probe counts, ...).
    InvalidArgument(String),
    /// A requested evaluation left the rectangular chart domain.
    OutsideChart,
    /// A frame or solution matrix is singular (or numerically so).
    DegenerateFrame { det: f64 },
    /// A sampled field produced a non-finite value.
    NonFinite,
    /// Two gridded objects do not share the same parameter grid.
    GridMismatch,
    /// The derivation is not linear in the vector-field argument on the path.
    NotLinear { residual: f64 },
    /// The path or tube fails the sampled injectivity check.
    NonInjective,
    /// A build finished but its defining residual exceeds the tolerance.
    ConstructionFailure { residual: f64, tolerance: f64 },
}

impl Error {
    pub fn invalid(msg: &str) -> Self {
        Error::InvalidArgument(String::from(msg))
    }
}

impl core::fmt::Display for Error {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::OutsideChart => write!(f, "evaluation point outside the chart domain"),
            Error::DegenerateFrame { det } => {
                write!(f, "degenerate matrix (det = {det:e})")
            }
            Error::NonFinite => write!(f, "non-finite field sample"),
            Error::GridMismatch => write!(f, "parameter grids do not match"),
            Error::NotLinear { residual } => {
                write!(f, "derivation is not linear along the path (residual {residual:e})")
            }
            Error::NonInjective => write!(f, "path or tube is not injective on the sampled range"),
            Error::ConstructionFailure { residual, tolerance } => write!(
                f,
                "construction residual {residual:e} exceeds tolerance {tolerance:e}"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
