use thiserror::Error;

/// Errors raised by the analytic kernels, samplers and statistical checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    #[error("{op} did not converge: {reason}")]
    NonConvergence { op: &'static str, reason: String },

    #[error("empty sample batch")]
    EmptyBatch,

    #[error("zero variance with estimate {estimate} != target {target}")]
    ZeroVariance { estimate: f64, target: f64 },

    #[error("adaptive step {step:e} fell below the floor {floor:e} at t = {t}")]
    StepUnderflow { step: f64, floor: f64, t: f64 },

    #[error("only {found} tail exceedances at t = {t}, need at least {needed}")]
    InsufficientTail { t: f64, found: usize, needed: usize },

    #[error("time grid spans {decades:.2} decades, need at least {needed}")]
    DegenerateGrid { decades: f64, needed: f64 },
}

impl Error {
    pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn non_convergence(op: &'static str, reason: impl Into<String>) -> Self {
        Error::NonConvergence {
            op,
            reason: reason.into(),
        }
    }

    /// True for the numerical non-convergence family (series, quadrature).
    pub fn is_non_convergence(&self) -> bool {
        matches!(self, Error::NonConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
