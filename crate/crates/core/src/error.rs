use thiserror::Error;

use crate::trial::DoseLevel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("a trial needs at least one dose level")]
    NoDoses,

    #[error("probability {value} at dose level {dose} is outside [0, 1]")]
    ProbabilityOutOfRange { dose: usize, value: f64 },

    #[error("dose-toxicity curve is not nondecreasing at dose level {dose}")]
    NotMonotone { dose: usize },

    #[error("dose level {dose} is outside 1..={num_doses}")]
    DoseOutOfRange { dose: usize, num_doses: usize },

    #[error("{dlts} DLTs cannot be observed among {patients} patients")]
    TooManyDlts { patients: u32, dlts: u32 },

    #[error("cohort size must be positive")]
    EmptyCohort,

    #[error("cohort recorded at dose {got} but the trial is at dose {expected}")]
    WrongDose { expected: DoseLevel, got: DoseLevel },

    #[error("the trial has already stopped")]
    TrialStopped,

    #[error("cannot escalate from dose {from} into excluded dose {into}")]
    EscalateIntoExcluded { from: DoseLevel, into: DoseLevel },

    #[error("declared MTD {0} has no treated patients")]
    MtdNotTreated(DoseLevel),

    #[error("cell (n = {patients}, t = {dlts}) is not reachable under this design")]
    UnreachableCell { patients: u32, dlts: u32 },

    #[error("design covers {design} dose levels but the curve has {curve}")]
    DimensionMismatch { design: usize, curve: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("input of length {len} exceeds the limit of {limit}")]
    TooLarge { len: usize, limit: usize },

    #[error("recorded cohort log diverges from the design at cohort {step}")]
    ReplayMismatch { step: usize },

    #[error("isotonic regression needs at least one value")]
    EmptyInput,

    #[error("values and weights differ in length ({values} vs {weights})")]
    LengthMismatch { values: usize, weights: usize },

    #[error("weight {value} at position {index} is not positive")]
    NonPositiveWeight { index: usize, value: f64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
