//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("axis {axis}: extent length {length} is not an integer multiple of h = {h}")]
    NonConformingSpacing { axis: usize, length: f64, h: f64 },

    #[error("axis {axis}: extent length {length} is shorter than 2h = {min}")]
    DegenerateAxis { axis: usize, length: f64, min: f64 },

    #[error("inner extents touch or exceed the outer extents on axis {axis}")]
    InnerNotContained { axis: usize },

    #[error("observation axis must be 0, 1 or 2, got {0}")]
    InvalidAxis(usize),

    #[error("coefficient value {value} outside admissible range [{lo}, {hi}]")]
    OutOfBounds { value: f64, lo: f64, hi: f64 },

    #[error("inclusion box leaks outside the inner region")]
    OutsideInner,

    #[error("field shape {got:?} does not match grid {expected:?}")]
    ShapeMismatch {
        expected: [usize; 3],
        got: [usize; 3],
    },

    #[error("time step {tau} exceeds the CFL bound {max}")]
    CflViolation { tau: f64, max: f64 },

    #[error("non-finite field value at step {step}")]
    NonFinite { step: usize },

    #[error("observation traces are not congruent: {0}")]
    TraceMismatch(String),

    #[error("field histories are not congruent: {0}")]
    HistoryMismatch(String),

    #[error("previous gradient norm is zero; restart with the steepest descent direction")]
    DegenerateGradient,

    #[error("finite-difference perturbation {step} at value {value} touches an admissible bound")]
    ClampContact { value: f64, step: f64 },

    #[error("denominator norm is zero")]
    ZeroDenominator,

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config field `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable category, used for CLI exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::NonConformingSpacing { .. }
            | Error::DegenerateAxis { .. }
            | Error::InnerNotContained { .. }
            | Error::InvalidAxis(_) => "grid",
            Error::OutOfBounds { .. } | Error::OutsideInner => "coefficients",
            Error::ShapeMismatch { .. }
            | Error::TraceMismatch(_)
            | Error::HistoryMismatch(_) => "shape",
            Error::CflViolation { .. } | Error::NonFinite { .. } => "solver",
            Error::DegenerateGradient | Error::ClampContact { .. } | Error::ZeroDenominator => {
                "verify"
            }
            Error::Parse(_) | Error::Validation { .. } => "config",
            Error::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "grid" | "coefficients" | "shape" => 4,
            "solver" => 5,
            "verify" => 6,
            _ => 1,
        }
    }
}
