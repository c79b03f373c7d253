//! Operating characteristics: Monte Carlo summaries and exact enumeration of
//! every cohort-outcome path for small trials.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rule_designs::{RuleDesign, RuleDesignConfig};
use crate::tpi::{TpiConfig, TpiDesign};
use crate::trial::{
    run_trial, Action, CeilingPolicy, Design, DoseLevel, DoseToxicityCurve, Plan, TrialOutcome,
    TrialState,
};

/// MTD thresholds reported by default.
pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.15, 0.20, 0.25, 0.30, 0.35];

pub const MAX_ENUMERATION_DOSES: usize = 4;
pub const MAX_ENUMERATION_COHORTS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DesignConfig {
    Rule(RuleDesignConfig),
    Tpi { config: TpiConfig, num_doses: usize },
}

impl DesignConfig {
    pub fn build(&self) -> Result<AnyDesign> {
        Ok(match *self {
            DesignConfig::Rule(config) => AnyDesign::Rule(RuleDesign::new(config)?),
            DesignConfig::Tpi { config, num_doses } => {
                AnyDesign::Tpi(TpiDesign::new(config, num_doses)?)
            }
        })
    }
}

/// Either design family behind one [`Design`] impl.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnyDesign {
    Rule(RuleDesign),
    Tpi(TpiDesign),
}

impl Design for AnyDesign {
    fn num_doses(&self) -> usize {
        match self {
            AnyDesign::Rule(d) => d.num_doses(),
            AnyDesign::Tpi(d) => d.num_doses(),
        }
    }

    fn ceiling(&self) -> CeilingPolicy {
        match self {
            AnyDesign::Rule(d) => d.ceiling(),
            AnyDesign::Tpi(d) => d.ceiling(),
        }
    }

    fn plan(&self, state: &TrialState) -> Result<Plan> {
        match self {
            AnyDesign::Rule(d) => d.plan(state),
            AnyDesign::Tpi(d) => d.plan(state),
        }
    }

    fn decide(&self, state: &TrialState) -> Result<Action> {
        match self {
            AnyDesign::Rule(d) => d.decide(state),
            AnyDesign::Tpi(d) => d.decide(state),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtdDistribution {
    pub none: f64,
    /// Probability of each dose level (entry 0 is dose 1).
    pub by_dose: Vec<f64>,
}

impl MtdDistribution {
    pub fn total(&self) -> f64 {
        self.none + self.by_dose.iter().sum::<f64>()
    }

    pub fn prob(&self, dose: Option<DoseLevel>) -> f64 {
        match dose {
            None => self.none,
            Some(d) => self.by_dose.get(d.index()).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProbability {
    pub threshold: f64,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub reps: u64,
    pub seed: u64,
    pub mtd_distribution: MtdDistribution,
    pub mean_patients_per_dose: Vec<f64>,
    pub mean_total_patients: f64,
    pub mean_total_dlts: f64,
    pub max_total_patients: u32,
    /// `P(true rate at the MTD >= threshold)`; no MTD counts as below.
    pub prob_mtd_rate_at_least: Vec<ThresholdProbability>,
}

#[derive(Clone, Debug, Default)]
struct Tally {
    mtd: Vec<u64>,
    patients: Vec<u64>,
    dlts: u64,
    max_patients: u32,
    above: Vec<u64>,
}

impl Tally {
    fn new(num_doses: usize, thresholds: usize) -> Self {
        Self {
            mtd: vec![0; num_doses + 1],
            patients: vec![0; num_doses],
            dlts: 0,
            max_patients: 0,
            above: vec![0; thresholds],
        }
    }

    fn add(&mut self, out: &TrialOutcome, curve: &DoseToxicityCurve, thresholds: &[f64]) {
        self.mtd[out.mtd.map_or(0, DoseLevel::get)] += 1;
        for (acc, g) in self.patients.iter_mut().zip(&out.groups) {
            *acc += u64::from(g.patients);
        }
        self.dlts += u64::from(out.total_dlts());
        self.max_patients = self.max_patients.max(out.total_patients());
        if let Some(m) = out.mtd {
            let rate = curve.prob(m);
            for (acc, &th) in self.above.iter_mut().zip(thresholds) {
                if rate >= th {
                    *acc += 1;
                }
            }
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        let add = |a: &mut Vec<u64>, b: &[u64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.mtd, &other.mtd);
        add(&mut self.patients, &other.patients);
        add(&mut self.above, &other.above);
        self.dlts += other.dlts;
        self.max_patients = self.max_patients.max(other.max_patients);
        self
    }
}

const BATCH: u64 = 1024;

/// Monte Carlo operating characteristics. Replication `i` uses ChaCha stream
/// `i` of `seed`; counts are integers, so results are identical for any
/// thread count.
pub fn simulate<D: Design + Sync + ?Sized>(
    design: &D,
    curve: &DoseToxicityCurve,
    reps: u64,
    seed: u64,
    thresholds: &[f64],
) -> Result<SimulationSummary> {
    if reps == 0 {
        return Err(Error::param("reps", "must be at least 1"));
    }
    if design.num_doses() != curve.num_doses() {
        return Err(Error::DimensionMismatch {
            design: design.num_doses(),
            curve: curve.num_doses(),
        });
    }
    let num_doses = curve.num_doses();
    let batches = reps.div_ceil(BATCH);
    let tally = (0..batches)
        .into_par_iter()
        .map(|b| -> Result<Tally> {
            let mut tally = Tally::new(num_doses, thresholds.len());
            for rep in b * BATCH..((b + 1) * BATCH).min(reps) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(rep);
                tally.add(&run_trial(design, curve, &mut rng)?, curve, thresholds);
            }
            Ok(tally)
        })
        .try_reduce(|| Tally::new(num_doses, thresholds.len()), |a, b| Ok(a.merge(b)))?;

    let n = reps as f64;
    let mean_patients_per_dose: Vec<f64> = tally.patients.iter().map(|&p| p as f64 / n).collect();
    Ok(SimulationSummary {
        reps,
        seed,
        mtd_distribution: MtdDistribution {
            none: tally.mtd[0] as f64 / n,
            by_dose: tally.mtd[1..].iter().map(|&c| c as f64 / n).collect(),
        },
        mean_total_patients: tally.patients.iter().sum::<u64>() as f64 / n,
        mean_patients_per_dose,
        mean_total_dlts: tally.dlts as f64 / n,
        max_total_patients: tally.max_patients,
        prob_mtd_rate_at_least: thresholds
            .iter()
            .zip(&tally.above)
            .map(|(&threshold, &c)| ThresholdProbability {
                threshold,
                probability: c as f64 / n,
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialPath {
    pub outcome: TrialOutcome,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathEnumeration {
    pub paths: Vec<TrialPath>,
    /// Probability mass of paths cut off at `max_cohorts`.
    pub truncated_probability: f64,
}

impl PathEnumeration {
    pub fn total_probability(&self) -> f64 {
        self.paths.iter().map(|p| p.probability).sum()
    }

    pub fn mtd_distribution(&self, num_doses: usize) -> MtdDistribution {
        let mut dist = MtdDistribution {
            none: 0.0,
            by_dose: vec![0.0; num_doses],
        };
        for p in &self.paths {
            match p.outcome.mtd {
                None => dist.none += p.probability,
                Some(d) => dist.by_dose[d.index()] += p.probability,
            }
        }
        dist
    }

    pub fn expected_patients_per_dose(&self, num_doses: usize) -> Vec<f64> {
        let mut mean = vec![0.0; num_doses];
        for p in &self.paths {
            for (m, g) in mean.iter_mut().zip(&p.outcome.groups) {
                *m += p.probability * f64::from(g.patients);
            }
        }
        mean
    }
}

fn binomial_pmf(size: u32, dlts: u32, p: f64) -> f64 {
    let mut coef = 1.0;
    for i in 0..dlts {
        coef = coef * f64::from(size - i) / f64::from(i + 1);
    }
    coef * p.powi(dlts as i32) * (1.0 - p).powi((size - dlts) as i32)
}

/// Every cohort-outcome path with its exact probability. Zero-probability
/// outcomes are pruned.
pub fn enumerate_paths<D: Design + ?Sized>(
    design: &D,
    curve: &DoseToxicityCurve,
    max_cohorts: usize,
) -> Result<PathEnumeration> {
    if design.num_doses() != curve.num_doses() {
        return Err(Error::DimensionMismatch {
            design: design.num_doses(),
            curve: curve.num_doses(),
        });
    }
    if curve.num_doses() > MAX_ENUMERATION_DOSES {
        return Err(Error::TooLarge {
            len: curve.num_doses(),
            limit: MAX_ENUMERATION_DOSES,
        });
    }
    if max_cohorts > MAX_ENUMERATION_COHORTS {
        return Err(Error::TooLarge {
            len: max_cohorts,
            limit: MAX_ENUMERATION_COHORTS,
        });
    }

    let mut result = PathEnumeration {
        paths: Vec::new(),
        truncated_probability: 0.0,
    };
    let mut stack = vec![(design.new_state()?, 1.0f64)];
    while let Some((mut state, probability)) = stack.pop() {
        if !state.is_active() {
            result.paths.push(TrialPath {
                outcome: state.into_outcome(),
                probability,
            });
            continue;
        }
        match design.plan(&state)? {
            Plan::Stop(mtd) => {
                state.apply_action(Action::Stop { mtd })?;
                stack.push((state, probability));
            }
            Plan::Enroll(_) if state.cohort_log().len() >= max_cohorts => {
                result.truncated_probability += probability;
            }
            Plan::Enroll(size) => {
                let dose = state.current_dose();
                let p = curve.prob(dose);
                // Reverse so that paths come out in ascending DLT order.
                for dlts in (0..=size).rev() {
                    let weight = binomial_pmf(size, dlts, p);
                    if weight == 0.0 {
                        continue;
                    }
                    let mut next = state.clone();
                    next.record_cohort(dose, size, dlts)?;
                    let action = design.decide(&next)?;
                    next.apply_action(action)?;
                    stack.push((next, probability * weight));
                }
            }
        }
    }
    Ok(result)
}
