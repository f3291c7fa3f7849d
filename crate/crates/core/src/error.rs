use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The open interval of improving weights is empty (e.g. an unbiased pre-trained estimate).
    #[error("degenerate interval: lower bound {lo} is not below upper bound {hi}")]
    DegenerateInterval { lo: f64, hi: f64 },

    /// The optimal weight sits at the boundary; `beta_limit` is the limiting value and λ* is unbounded.
    #[error("degenerate optimum: beta* -> {beta_limit}, lambda* unbounded")]
    DegenerateOptimum { beta_limit: f64 },

    #[error("infeasible multiplier alpha = {alpha}: weight denominator {denominator} is not positive")]
    InfeasibleAlpha { alpha: f64, denominator: f64 },

    #[error("no feasible root: {0}")]
    NoFeasibleRoot(String),

    #[error("quadrature unstable: root moved from {coarse} to {fine} under node doubling")]
    QuadratureUnstable { coarse: f64, fine: f64 },

    #[error("numerical error at step {step}: {what}")]
    NumericalError { step: usize, what: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
