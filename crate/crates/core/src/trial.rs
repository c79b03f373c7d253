//! Domain types and the sequential-trial state machine shared by every design.
//!
//! A trial walks a fixed ladder of dose levels. Each step enrolls a cohort at
//! the current dose, records its DLT count, asks the design for an [`Action`]
//! and applies it. Designs implement [`Design`]; the driver functions
//! ([`run_trial`], [`replay`], [`drive`]) own the loop.
//!
//! Dose levels are 1-based everywhere in the public surface.

use std::fmt;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 1-based dose level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DoseLevel(usize);

impl DoseLevel {
    pub const FIRST: DoseLevel = DoseLevel(1);

    pub fn new(level: usize) -> Option<Self> {
        (level >= 1).then_some(DoseLevel(level))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based position in per-dose vectors.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(index: usize) -> Self {
        DoseLevel(index + 1)
    }

    fn above(self) -> Self {
        DoseLevel(self.0 + 1)
    }

    fn below(self) -> Option<Self> {
        DoseLevel::new(self.0 - 1)
    }
}

impl fmt::Display for DoseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// True DLT probabilities, one per dose level. Monotonicity is only checked
/// on request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoseToxicityCurve {
    probs: Vec<f64>,
}

impl DoseToxicityCurve {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::NoDoses);
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::ProbabilityOutOfRange {
                    dose: i + 1,
                    value: p,
                });
            }
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_doses(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, dose: DoseLevel) -> f64 {
        self.probs[dose.index()]
    }

    pub fn is_monotone(&self) -> bool {
        self.probs.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn require_monotone(&self) -> Result<()> {
        match self.probs.windows(2).position(|w| w[0] > w[1]) {
            Some(i) => Err(Error::NotMonotone { dose: i + 2 }),
            None => Ok(()),
        }
    }
}

/// Patients treated and DLTs observed at one dose level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DoseGroupRecord {
    pub patients: u32,
    pub dlts: u32,
}

impl DoseGroupRecord {
    pub fn new(patients: u32, dlts: u32) -> Result<Self> {
        if dlts > patients {
            return Err(Error::TooManyDlts { patients, dlts });
        }
        Ok(Self { patients, dlts })
    }

    /// Empirical DLT rate, `None` for an untreated dose.
    pub fn rate(&self) -> Option<f64> {
        (self.patients > 0).then(|| f64::from(self.dlts) / f64::from(self.patients))
    }

    pub fn is_visited(&self) -> bool {
        self.patients > 0
    }
}

/// One cohort as it was enrolled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cohort {
    pub dose: DoseLevel,
    pub size: u32,
    pub dlts: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "mtd")]
pub enum TrialStatus {
    Active,
    StoppedWithMtd(DoseLevel),
    StoppedNoMtd,
}

/// The decision alphabet. `Stop` carries the MTD declared by the design.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Escalate,
    Stay,
    DeEscalate,
    DeEscalateUnacceptable,
    Stop { mtd: Option<DoseLevel> },
}

impl Action {
    /// Monitoring-table symbol.
    pub fn symbol(&self) -> &'static str {
        match self {
            Action::Escalate => "E",
            Action::Stay => "S",
            Action::DeEscalate => "D",
            Action::DeEscalateUnacceptable => "DU",
            Action::Stop { .. } => "STOP",
        }
    }

    pub fn from_symbol(symbol: &str) -> Option<Self> {
        match symbol {
            "E" => Some(Action::Escalate),
            "S" => Some(Action::Stay),
            "D" => Some(Action::DeEscalate),
            "DU" => Some(Action::DeEscalateUnacceptable),
            _ => None,
        }
    }

    /// Position on the escalate-to-exclude scale; `None` for `Stop`.
    pub fn caution(&self) -> Option<u8> {
        match self {
            Action::Escalate => Some(0),
            Action::Stay => Some(1),
            Action::DeEscalate => Some(2),
            Action::DeEscalateUnacceptable => Some(3),
            Action::Stop { .. } => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// What `Escalate` means at the top dose.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CeilingPolicy {
    /// Stop and declare the top dose the MTD. Rule designs only escalate at
    /// the top once its full group has passed, so this completes the group
    /// first.
    #[default]
    ExpandThenStop,
    /// Stay at the top dose and keep enrolling.
    Hold,
}

/// The record a design reads when deciding. Mutated only through
/// [`TrialState::record_cohort`] and [`TrialState::apply_action`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TrialState {
    groups: Vec<DoseGroupRecord>,
    current: DoseLevel,
    excluded_from: Option<DoseLevel>,
    status: TrialStatus,
    ceiling: CeilingPolicy,
    mtd_at_boundary: bool,
    cohort_log: Vec<Cohort>,
}

impl TrialState {
    pub fn new(num_doses: usize) -> Result<Self> {
        Self::with_ceiling(num_doses, CeilingPolicy::default())
    }

    pub fn with_ceiling(num_doses: usize, ceiling: CeilingPolicy) -> Result<Self> {
        if num_doses == 0 {
            return Err(Error::NoDoses);
        }
        Ok(Self {
            groups: vec![DoseGroupRecord::default(); num_doses],
            current: DoseLevel::FIRST,
            excluded_from: None,
            status: TrialStatus::Active,
            ceiling,
            mtd_at_boundary: false,
            cohort_log: Vec::new(),
        })
    }

    pub fn num_doses(&self) -> usize {
        self.groups.len()
    }

    pub fn top_dose(&self) -> DoseLevel {
        DoseLevel(self.groups.len())
    }

    pub fn current_dose(&self) -> DoseLevel {
        self.current
    }

    pub fn current_group(&self) -> DoseGroupRecord {
        self.groups[self.current.index()]
    }

    pub fn group(&self, dose: DoseLevel) -> DoseGroupRecord {
        self.groups[dose.index()]
    }

    pub fn groups(&self) -> &[DoseGroupRecord] {
        &self.groups
    }

    pub fn status(&self) -> TrialStatus {
        self.status
    }

    pub fn is_active(&self) -> bool {
        self.status == TrialStatus::Active
    }

    pub fn is_at_top(&self) -> bool {
        self.current == self.top_dose()
    }

    /// Lowest excluded dose; every dose at or above it is excluded.
    pub fn excluded_from(&self) -> Option<DoseLevel> {
        self.excluded_from
    }

    pub fn is_excluded(&self, dose: DoseLevel) -> bool {
        self.excluded_from.is_some_and(|lo| dose >= lo)
    }

    pub fn excluded(&self) -> impl Iterator<Item = DoseLevel> + '_ {
        let lo = self.excluded_from.map_or(self.groups.len() + 1, DoseLevel::get);
        (lo..=self.groups.len()).map(DoseLevel)
    }

    /// Whether the dose above the current one exists and is excluded.
    pub fn next_dose_excluded(&self) -> bool {
        !self.is_at_top() && self.is_excluded(self.current.above())
    }

    pub fn cohort_log(&self) -> &[Cohort] {
        &self.cohort_log
    }

    pub fn total_patients(&self) -> u32 {
        self.groups.iter().map(|g| g.patients).sum()
    }

    pub fn total_dlts(&self) -> u32 {
        self.groups.iter().map(|g| g.dlts).sum()
    }

    pub fn mtd_at_boundary(&self) -> bool {
        self.mtd_at_boundary
    }

    pub fn record_cohort(&mut self, dose: DoseLevel, size: u32, dlts: u32) -> Result<()> {
        if !self.is_active() {
            return Err(Error::TrialStopped);
        }
        if dose != self.current {
            return Err(Error::WrongDose {
                expected: self.current,
                got: dose,
            });
        }
        if size == 0 {
            return Err(Error::EmptyCohort);
        }
        if dlts > size {
            return Err(Error::TooManyDlts {
                patients: size,
                dlts,
            });
        }
        let group = &mut self.groups[dose.index()];
        group.patients += size;
        group.dlts += dlts;
        self.cohort_log.push(Cohort { dose, size, dlts });
        Ok(())
    }

    pub fn apply_action(&mut self, action: Action) -> Result<()> {
        if !self.is_active() {
            return Err(Error::TrialStopped);
        }
        match action {
            Action::Escalate => {
                if self.is_at_top() {
                    match self.ceiling {
                        CeilingPolicy::ExpandThenStop => {
                            self.mtd_at_boundary = true;
                            self.stop(Some(self.current))?;
                        }
                        CeilingPolicy::Hold => {}
                    }
                } else {
                    let next = self.current.above();
                    if self.is_excluded(next) {
                        return Err(Error::EscalateIntoExcluded {
                            from: self.current,
                            into: next,
                        });
                    }
                    self.current = next;
                }
            }
            Action::Stay => {}
            // Plain de-escalation at the lowest dose keeps dose 1.
            Action::DeEscalate => {
                if let Some(below) = self.current.below() {
                    self.current = below;
                }
            }
            Action::DeEscalateUnacceptable => {
                self.excluded_from = Some(self.current);
                match self.current.below() {
                    Some(below) => self.current = below,
                    None => self.status = TrialStatus::StoppedNoMtd,
                }
            }
            Action::Stop { mtd } => self.stop(mtd)?,
        }
        Ok(())
    }

    fn stop(&mut self, mtd: Option<DoseLevel>) -> Result<()> {
        self.status = match mtd {
            Some(dose) => {
                if dose.get() > self.groups.len() {
                    return Err(Error::DoseOutOfRange {
                        dose: dose.get(),
                        num_doses: self.groups.len(),
                    });
                }
                if !self.group(dose).is_visited() {
                    return Err(Error::MtdNotTreated(dose));
                }
                TrialStatus::StoppedWithMtd(dose)
            }
            None => TrialStatus::StoppedNoMtd,
        };
        Ok(())
    }

    pub fn into_outcome(self) -> TrialOutcome {
        let mtd = match self.status {
            TrialStatus::StoppedWithMtd(d) => Some(d),
            _ => None,
        };
        TrialOutcome {
            mtd,
            mtd_at_boundary: self.mtd_at_boundary && mtd.is_some(),
            excluded_from: self.excluded_from,
            groups: self.groups,
            cohort_log: self.cohort_log,
        }
    }
}

/// Final record of one trial run.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub mtd: Option<DoseLevel>,
    /// Set when the MTD was declared because escalation was mandated at the
    /// top dose.
    pub mtd_at_boundary: bool,
    pub excluded_from: Option<DoseLevel>,
    pub groups: Vec<DoseGroupRecord>,
    pub cohort_log: Vec<Cohort>,
}

impl TrialOutcome {
    pub fn total_patients(&self) -> u32 {
        self.groups.iter().map(|g| g.patients).sum()
    }

    pub fn total_dlts(&self) -> u32 {
        self.groups.iter().map(|g| g.dlts).sum()
    }
}

/// What the design wants before the next cohort.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plan {
    Enroll(u32),
    Stop(Option<DoseLevel>),
}

/// A dose-finding design: decides cohort sizes and reacts to observed data.
pub trait Design {
    fn num_doses(&self) -> usize;

    fn ceiling(&self) -> CeilingPolicy {
        CeilingPolicy::ExpandThenStop
    }

    /// Called on an active state before each enrollment.
    fn plan(&self, state: &TrialState) -> Result<Plan>;

    /// Called right after a cohort has been recorded at the current dose.
    fn decide(&self, state: &TrialState) -> Result<Action>;

    fn new_state(&self) -> Result<TrialState> {
        TrialState::with_ceiling(self.num_doses(), self.ceiling())
    }
}

impl<D: Design + ?Sized> Design for &D {
    fn num_doses(&self) -> usize {
        (**self).num_doses()
    }
    fn ceiling(&self) -> CeilingPolicy {
        (**self).ceiling()
    }
    fn plan(&self, state: &TrialState) -> Result<Plan> {
        (**self).plan(state)
    }
    fn decide(&self, state: &TrialState) -> Result<Action> {
        (**self).decide(state)
    }
}

/// Runs one trial, drawing each cohort's DLT count from `source(dose, size)`.
pub fn drive<D, F>(design: &D, mut source: F) -> Result<TrialOutcome>
where
    D: Design + ?Sized,
    F: FnMut(DoseLevel, u32) -> Result<u32>,
{
    let mut state = design.new_state()?;
    while state.is_active() {
        step(design, &mut state, &mut source)?;
    }
    Ok(state.into_outcome())
}

/// One plan/enroll/decide/apply cycle.
pub fn step<D, F>(design: &D, state: &mut TrialState, source: &mut F) -> Result<()>
where
    D: Design + ?Sized,
    F: FnMut(DoseLevel, u32) -> Result<u32>,
{
    match design.plan(state)? {
        Plan::Stop(mtd) => state.apply_action(Action::Stop { mtd }),
        Plan::Enroll(size) => {
            let dose = state.current_dose();
            let dlts = source(dose, size)?;
            state.record_cohort(dose, size, dlts)?;
            let action = design.decide(state)?;
            state.apply_action(action)
        }
    }
}

/// Runs a design against a true curve with binomial cohort DLT draws.
pub fn run_trial<D, R>(design: &D, curve: &DoseToxicityCurve, rng: &mut R) -> Result<TrialOutcome>
where
    D: Design + ?Sized,
    R: Rng + ?Sized,
{
    if design.num_doses() != curve.num_doses() {
        return Err(Error::DimensionMismatch {
            design: design.num_doses(),
            curve: curve.num_doses(),
        });
    }
    drive(design, |dose, size| {
        let draw = Binomial::new(u64::from(size), curve.prob(dose))
            .map_err(|e| Error::param("curve", e.to_string()))?;
        Ok(draw.sample(rng) as u32)
    })
}

/// Re-runs a design on a recorded cohort log. Fails if the design asks for a
/// cohort the log does not contain.
pub fn replay<D: Design + ?Sized>(design: &D, log: &[Cohort]) -> Result<TrialOutcome> {
    let mut next = 0usize;
    let outcome = drive(design, |dose, size| {
        let cohort = log.get(next).ok_or(Error::ReplayMismatch { step: next })?;
        if cohort.dose != dose || cohort.size != size {
            return Err(Error::ReplayMismatch { step: next });
        }
        next += 1;
        Ok(cohort.dlts)
    })?;
    if next != log.len() {
        return Err(Error::ReplayMismatch { step: next });
    }
    Ok(outcome)
}
