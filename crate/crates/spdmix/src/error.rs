//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by pricing, fitting, simulation and I/O.
#[derive(Debug, Error)]
pub enum SpdError {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// No quotes were supplied where at least one is required.
    #[error("no quotes supplied")]
    EmptyQuotes,

    /// Put-call parity inversion hit a non-positive logarithm argument.
    #[error("inconsistent parity inputs: C - P + X e^(-r tau) = {0} <= 0")]
    InconsistentParity(f64),

    /// The forward-price equality cannot be met on the weight simplex.
    #[error("infeasible forward constraint: target {target} outside [{lo}, {hi}]")]
    InfeasibleConstraint { target: f64, lo: f64, hi: f64 },

    /// The QP solver hit its iteration cap before certifying optimality.
    #[error("QP did not converge: best KKT residual {residual:.3e} after {iterations} iterations")]
    QpNonConvergence { residual: f64, iterations: usize },

    /// Fewer than three distinct strikes for the naive second difference.
    #[error("need at least 3 distinct strikes, got {0}")]
    TooFewStrikes(usize),

    /// Too many Monte Carlo runs failed to fit.
    #[error("{failed} of {total} simulation runs failed")]
    StudyFailure { failed: usize, total: usize },

    /// A malformed field in a quote CSV file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A required CSV column is absent.
    #[error("missing required column '{0}'")]
    MissingColumn(String),

    /// The quote file contains no data rows.
    #[error("empty quote file")]
    EmptyFile,

    /// A model document failed validation after parsing.
    #[error("invalid model document: {0}")]
    InvalidModel(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SpdError {
    /// Short machine-greppable code used by the CLI (`ERROR <code>: <detail>`).
    pub fn code(&self) -> &'static str {
        match self {
            SpdError::Domain(_) => "domain",
            SpdError::EmptyQuotes => "empty-quotes",
            SpdError::InconsistentParity(_) => "inconsistent-parity",
            SpdError::InfeasibleConstraint { .. } => "infeasible-constraint",
            SpdError::QpNonConvergence { .. } => "qp-nonconvergence",
            SpdError::TooFewStrikes(_) => "too-few-strikes",
            SpdError::StudyFailure { .. } => "study-failure",
            SpdError::Parse { .. } => "parse",
            SpdError::MissingColumn(_) => "missing-column",
            SpdError::EmptyFile => "empty-file",
            SpdError::InvalidModel(_) => "invalid-model",
            SpdError::Io(_) => "io",
            SpdError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, SpdError>;
