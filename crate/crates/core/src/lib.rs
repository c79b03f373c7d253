//! Phase I dose-finding designs and their operating characteristics.
//!
//! The crate is organised around a small sequential-trial state machine
//! ([`trial`]) that the concrete designs plug into:
//!
//! - [`rule_designs`]: the 3+3 standard design, its 2+2 / 4+4 variants and the
//!   1+2+3/3+3 accelerated hybrid, together with their monitoring tables.
//! - [`tpi`]: the Bayesian toxicity-probability-interval design with its
//!   exclusion rule and isotonic MTD estimate.
//! - [`isotonic`]: weighted pool-adjacent-violators regression, a brute-force
//!   oracle, and MTD selection rules built on monotone fits.
//! - [`worstcase`]: closed-form and series worst-case bounds `r(v)` plus a
//!   Monte Carlo check on the worst-case dose-toxicity curve.
//! - [`sim`]: Monte Carlo operating characteristics and exact path enumeration.
//! - [`equivalence`]: harnesses checking that the 3+3 design coincides with an
//!   isotonic MTD estimator and with a tuned TPI design.

pub mod equivalence;
pub mod error;
pub mod isotonic;
pub mod rule_designs;
pub mod sim;
pub mod tpi;
pub mod trial;
pub mod worstcase;

pub use error::{Error, Result};
pub use trial::{
    Action, CeilingPolicy, Cohort, Design, DoseGroupRecord, DoseLevel, DoseToxicityCurve, Plan,
    TrialOutcome, TrialState, TrialStatus,
};
