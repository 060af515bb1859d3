use thiserror::Error;

use crate::realization::RealizedDensity;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("moments undefined: {0}")]
    MomentUndefined(String),
    #[error("moment order {requested} exceeds cap {cap}")]
    OrderOverflow { requested: usize, cap: usize },
    #[error("distribution has no density (atomic)")]
    NoDensity,
    #[error("moment vector of odd order {0} has no Hankel matrix")]
    OddOrder(usize),
    #[error("moment orders differ: {0} vs {1}")]
    OrderMismatch(usize, usize),
    #[error("trajectory endpoint {0} does not have a positive definite Hankel matrix")]
    EndpointNotPD(&'static str),
    #[error("truncation to {requested} exceeds available order {available}")]
    LengthExceeded { requested: usize, available: usize },
    #[error("extended moment schedule needs order {required}, above cap {cap}")]
    ScheduleOverflow { required: usize, cap: usize },
    #[error("insufficient moment order: need {needed} of {what}, have {available}")]
    InsufficientOrder {
        what: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("non-finite intermediate value at moment order {0}")]
    NonFiniteIntermediate(usize),
    #[error("gain c = 1 is infeasible: next-state moments are not a valid moment sequence")]
    InfeasibleAtOne,
    #[error("dual polynomial is not positive on the quadrature grid")]
    NonPositiveQ,
    #[error("realization did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged {
        iterations: usize,
        grad_norm: f64,
        best: Box<RealizedDensity>,
    },
    #[error("Hankel matrix of prescribed moments is indefinite (min eigenvalue {0:e})")]
    HankelIndefinite(f64),
    #[error("kernel polynomial has complex roots; moments are numerically indefinite")]
    ComplexRoots,
    #[error("atomic weight {0:e} is negative")]
    NegativeWeight(f64),
    #[error("degenerate variance {0:e}; the measure is a point mass")]
    DegenerateVariance(f64),
    #[error("polynomial fit residual {residual:e} exceeds bound {bound:e}")]
    IllConditionedFit { residual: f64, bound: f64 },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// Step index carried by the error, if it was raised while planning a step.
    pub fn step(&self) -> Option<usize> {
        match self {
            Error::Step { step, .. } => Some(*step),
            _ => None,
        }
    }
}
