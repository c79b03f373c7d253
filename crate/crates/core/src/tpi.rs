//! Toxicity-probability-interval design.
//!
//! Each dose carries an independent Beta prior. After every cohort the
//! posterior of the current dose's DLT rate is split into three intervals
//! around the target, `(0, p_T - K1 sd)`, `[p_T - K1 sd, p_T + K2 sd]` and
//! `(p_T + K2 sd, 1)`, and the interval with the highest score picks
//! escalate, stay or de-escalate. A dose whose posterior puts more than `xi`
//! of its mass above the target is excluded together with every higher dose.
//! At the end of the trial the posterior means are smoothed by isotonic
//! regression and the dose closest to the target is selected.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::isotonic::{mtd_closest, pava};
use crate::rule_designs::MonitoringTable;
use crate::trial::{
    run_trial, Action, CeilingPolicy, Design, DoseGroupRecord, DoseLevel, DoseToxicityCurve, Plan,
    TrialOutcome, TrialState,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::param("beta", format!("must be positive, got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn uniform() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    pub params: BetaParams,
    pub mean: f64,
    pub sd: f64,
}

impl BetaPosterior {
    pub fn from_params(params: BetaParams) -> Self {
        Self {
            params,
            mean: params.mean(),
            sd: params.variance().sqrt(),
        }
    }

    pub fn variance(&self) -> f64 {
        self.params.variance()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        beta_cdf(x, &self.params)
    }
}

/// Conjugate update of `prior` with `dlts` out of `patients`.
pub fn posterior(prior: &BetaParams, patients: u32, dlts: u32) -> Result<BetaPosterior> {
    if dlts > patients {
        return Err(Error::TooManyDlts { patients, dlts });
    }
    let params = BetaParams::new(
        prior.alpha + f64::from(dlts),
        prior.beta + f64::from(patients - dlts),
    )?;
    Ok(BetaPosterior::from_params(params))
}

/// `P(p <= x)` for `p ~ Beta(alpha, beta)`; `x` is clamped to `[0, 1]`.
pub fn beta_cdf(x: f64, params: &BetaParams) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_reg(params.alpha, params.beta, x)
    }
}

/// How interval posterior masses are compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMetric {
    /// Posterior probability of each interval.
    RawMass,
    /// Posterior probability divided by interval length.
    #[default]
    LengthNormalized,
}

/// Isotonic weights used for MTD selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightConvention {
    /// Posterior variance.
    #[default]
    Variance,
    /// Posterior precision.
    InverseVariance,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingRule {
    /// Stop once `max_patients` have been treated.
    #[default]
    FixedSampleSize,
    /// Stop when the current dose has at least 6 patients with at most 1 DLT
    /// and no admissible dose above it. `max_patients` remains a hard cap.
    OneOfSixBelowExcluded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpiConfig {
    pub p_target: f64,
    pub k1: f64,
    pub k2: f64,
    pub xi: f64,
    pub prior: BetaParams,
    pub cohort_size: u32,
    pub max_patients: u32,
    pub metric: DecisionMetric,
    pub weights: WeightConvention,
    pub stopping: StoppingRule,
}

impl Default for TpiConfig {
    fn default() -> Self {
        Self::matching_standard_design()
    }
}

impl TpiConfig {
    /// Parameters under which the monitoring table coincides with the 3+3:
    /// `K1 = 1`, `K2 = 0.1`, `p_T = 0.17`, `xi = 0.7`, prior `Beta(0.005, 0.005)`,
    /// cohorts of 3.
    pub fn matching_standard_design() -> Self {
        Self {
            p_target: 0.17,
            k1: 1.0,
            k2: 0.1,
            xi: 0.7,
            prior: BetaParams {
                alpha: 0.005,
                beta: 0.005,
            },
            cohort_size: 3,
            max_patients: 30,
            metric: DecisionMetric::LengthNormalized,
            weights: WeightConvention::Variance,
            stopping: StoppingRule::FixedSampleSize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &'static str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("must lie in (0, 1), got {v}")))
            }
        };
        open_unit("p_target", self.p_target)?;
        open_unit("xi", self.xi)?;
        for (name, k) in [("k1", self.k1), ("k2", self.k2)] {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::param(name, format!("must be nonnegative, got {k}")));
            }
        }
        BetaParams::new(self.prior.alpha, self.prior.beta)?;
        if self.cohort_size == 0 {
            return Err(Error::param("cohort_size", "must be positive"));
        }
        if self.max_patients == 0 || !self.max_patients.is_multiple_of(self.cohort_size) {
            return Err(Error::param(
                "max_patients",
                format!(
                    "must be a positive multiple of the cohort size {}, got {}",
                    self.cohort_size, self.max_patients
                ),
            ));
        }
        Ok(())
    }
}

/// Scores of the under-dosing, target and over-dosing intervals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalScores {
    pub scores: [f64; 3],
    /// Clamped interval endpoints `(a, b)`.
    pub bounds: (f64, f64),
}

impl IntervalScores {
    /// Index of the winning interval; ties go to the more cautious one.
    pub fn argmax(&self) -> usize {
        argmax_cautious(&self.scores)
    }
}

fn argmax_cautious(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s >= scores[best] {
            best = i;
        }
    }
    best
}

pub fn interval_masses(post: &BetaPosterior, config: &TpiConfig) -> IntervalScores {
    let a = (config.p_target - config.k1 * post.sd).clamp(0.0, 1.0);
    let b = (config.p_target + config.k2 * post.sd).clamp(0.0, 1.0);
    let fa = post.cdf(a);
    let fb = post.cdf(b);
    let masses = [fa, (fb - fa).max(0.0), (1.0 - fb).max(0.0)];
    let scores = match config.metric {
        DecisionMetric::RawMass => masses,
        DecisionMetric::LengthNormalized => {
            let lengths = [a, b - a, 1.0 - b];
            let mut s = [0.0; 3];
            for i in 0..3 {
                s[i] = if lengths[i] > 0.0 {
                    masses[i] / lengths[i]
                } else {
                    0.0
                };
            }
            s
        }
    };
    IntervalScores {
        scores,
        bounds: (a, b),
    }
}

/// Posterior probability that the DLT rate exceeds the target.
pub fn excess_probability(patients: u32, dlts: u32, config: &TpiConfig) -> Result<f64> {
    let post = posterior(&config.prior, patients, dlts)?;
    Ok(1.0 - post.cdf(config.p_target))
}

pub fn exclusion_check(patients: u32, dlts: u32, config: &TpiConfig) -> Result<bool> {
    Ok(excess_probability(patients, dlts, config)? > config.xi)
}

/// Action after observing `dlts` of `patients` at the current dose.
///
/// Below an excluded dose only the first two intervals compete, and either
/// outcome keeps the current dose.
pub fn tpi_decision(
    patients: u32,
    dlts: u32,
    config: &TpiConfig,
    next_dose_excluded: bool,
) -> Result<Action> {
    if patients < config.cohort_size || patients == 0 {
        return Err(Error::UnreachableCell { patients, dlts });
    }
    if exclusion_check(patients, dlts, config)? {
        return Ok(Action::DeEscalateUnacceptable);
    }
    if next_dose_excluded {
        return Ok(Action::Stay);
    }
    let post = posterior(&config.prior, patients, dlts)?;
    Ok(match interval_masses(&post, config).argmax() {
        0 => Action::Escalate,
        1 => Action::Stay,
        _ => Action::DeEscalate,
    })
}

pub fn tpi_monitoring_table(config: &TpiConfig, group_sizes: &[u32]) -> Result<MonitoringTable> {
    config.validate()?;
    let mut table = MonitoringTable::new();
    for &n in group_sizes {
        if n == 0 || n % config.cohort_size != 0 {
            return Err(Error::param(
                "group_sizes",
                format!("{n} is not a positive multiple of the cohort size {}", config.cohort_size),
            ));
        }
        for t in 0..=n {
            table.insert(n, t, tpi_decision(n, t, config, false)?);
        }
    }
    Ok(table)
}

/// Isotonic estimate over treated, non-excluded doses, then the dose closest
/// to the target.
pub fn tpi_select_mtd(
    groups: &[DoseGroupRecord],
    excluded_from: Option<DoseLevel>,
    config: &TpiConfig,
) -> Option<DoseLevel> {
    let mut doses = Vec::new();
    let mut means = Vec::new();
    let mut weights = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let dose = DoseLevel::from_index(i);
        if !g.is_visited() || excluded_from.is_some_and(|lo| dose >= lo) {
            continue;
        }
        let post = posterior(&config.prior, g.patients, g.dlts).ok()?;
        doses.push(dose);
        means.push(post.mean);
        weights.push(match config.weights {
            WeightConvention::Variance => post.variance(),
            WeightConvention::InverseVariance => 1.0 / post.variance(),
        });
    }
    if doses.is_empty() {
        return None;
    }
    let fit = pava(&means, &weights).ok()?;
    mtd_closest(&fit, config.p_target, &doses)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TpiDesign {
    config: TpiConfig,
    num_doses: usize,
}

impl TpiDesign {
    pub fn new(config: TpiConfig, num_doses: usize) -> Result<Self> {
        config.validate()?;
        if num_doses == 0 {
            return Err(Error::NoDoses);
        }
        Ok(Self { config, num_doses })
    }

    pub fn config(&self) -> &TpiConfig {
        &self.config
    }

    fn select(&self, state: &TrialState) -> Option<DoseLevel> {
        tpi_select_mtd(state.groups(), state.excluded_from(), &self.config)
    }
}

impl Design for TpiDesign {
    fn num_doses(&self) -> usize {
        self.num_doses
    }

    fn ceiling(&self) -> CeilingPolicy {
        CeilingPolicy::Hold
    }

    fn plan(&self, state: &TrialState) -> Result<Plan> {
        if state.total_patients() >= self.config.max_patients {
            return Ok(Plan::Stop(self.select(state)));
        }
        if self.config.stopping == StoppingRule::OneOfSixBelowExcluded {
            let g = state.current_group();
            let blocked = state.is_at_top() || state.next_dose_excluded();
            if g.patients >= 6 && g.dlts <= 1 && blocked {
                return Ok(Plan::Stop(self.select(state)));
            }
        }
        Ok(Plan::Enroll(self.config.cohort_size))
    }

    fn decide(&self, state: &TrialState) -> Result<Action> {
        let g = state.current_group();
        tpi_decision(g.patients, g.dlts, &self.config, state.next_dose_excluded())
    }
}

pub fn tpi_run<R: rand::Rng + ?Sized>(
    config: &TpiConfig,
    curve: &DoseToxicityCurve,
    rng: &mut R,
) -> Result<TrialOutcome> {
    let design = TpiDesign::new(*config, curve.num_doses())?;
    run_trial(&design, curve, rng)
}
