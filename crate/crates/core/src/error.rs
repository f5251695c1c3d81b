use alloc::string::String;
use alloc::vec::Vec;

use crate::meanfield::IterationRecord;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown model family `{0}`")]
    UnknownModel(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("integrand has not decayed below threshold by s = {s_max}")]
    NonIntegrable { s_max: f64 },

    #[error("quadrature did not reach tolerance {tolerance:e} (error estimate {estimate:e})")]
    QuadratureFailed { tolerance: f64, estimate: f64 },

    #[error("c_V + c_W = {sum} is not positive")]
    NonDissipative { sum: f64 },

    #[error("unsupported: {0}")]
    Unsupported(&'static str),

    #[error("Zegarlinski condition fails: gamma0 = {gamma0} >= 1")]
    ZegarlinskiFails { gamma0: f64 },

    #[error("bound is vacuous: 1 + c_Lip,m * h = {denominator} <= 0")]
    VacuousBound { denominator: f64 },

    #[error("particle system blew up at step {step}")]
    Blowup { step: u64 },

    #[error("MALA acceptance rate {rate} is below 1%; reduce the step size")]
    DegenerateAcceptance { rate: f64 },

    #[error("no autocovariance lag window exceeds 5 standard errors")]
    InsufficientSignal,

    #[error("boundary cells carry mass {mass:e}; enlarge the grid")]
    MassLeak { mass: f64 },

    #[error("measure charges cell {cell} where the reference density underflows")]
    UnboundedEntropy { cell: usize },

    #[error("effective support is disconnected")]
    SupportTooRough,

    #[error("negative density {value:e} in cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<IterationRecord>,
    },
}
