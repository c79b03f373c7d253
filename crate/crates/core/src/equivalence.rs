//! Harnesses relating the 3+3 design to the isotonic MTD estimator and to
//! the TPI design. Each returns a report; the caller decides what counts as
//! failure.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::isotonic::{empirical_rates, mtd_largest_below, pava};
use crate::rule_designs::{select_mtd_standard, table2, CellDiff, RuleDesign};
use crate::sim::enumerate_paths;
use crate::tpi::{tpi_monitoring_table, tpi_select_mtd, StoppingRule, TpiConfig, TpiDesign};
use crate::trial::{Cohort, DoseLevel, DoseToxicityCurve};

/// Targets swept over `[1/6, 1/3)`.
pub const ISOTONIC_TARGETS: [f64; 5] = [1.0 / 6.0, 0.20, 0.25, 0.30, 1.0 / 3.0 - 1e-9];

/// Curve used for exhaustive enumeration; every cohort outcome has positive
/// probability.
pub const ENUMERATION_CURVE: [f64; 4] = [0.2, 0.3, 0.45, 0.6];

/// Cells of the printed 3+3 table that the TPI table assigns differently.
pub fn table_diffs(config: &TpiConfig) -> Result<Vec<CellDiff>> {
    let tpi = tpi_monitoring_table(config, &[3, 6])?;
    Ok(table2().diff_on_domain(&tpi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub label: String,
    pub config: TpiConfig,
    pub diffs: Vec<CellDiff>,
}

fn short(x: f64) -> String {
    let s = format!("{x:.9}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Table comparison under one-at-a-time perturbations of `p_T` and `xi`.
pub fn stability_diffs(base: &TpiConfig, p_targets: &[f64], xis: &[f64]) -> Result<Vec<Perturbation>> {
    let mut out = Vec::new();
    for &p_target in p_targets {
        let config = TpiConfig { p_target, ..*base };
        out.push(Perturbation {
            label: format!("p_T = {}", short(p_target)),
            config,
            diffs: table_diffs(&config)?,
        });
    }
    for &xi in xis {
        let config = TpiConfig { xi, ..*base };
        out.push(Perturbation {
            label: format!("xi = {}", short(xi)),
            config,
            diffs: table_diffs(&config)?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentMismatch {
    pub num_doses: usize,
    pub cohort_log: Vec<Cohort>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AssignmentReport {
    pub paths_checked: usize,
    pub mismatches: Vec<AssignmentMismatch>,
}

impl AssignmentReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

type PathMap = BTreeMap<Vec<Cohort>, (f64, Option<DoseLevel>)>;

/// Enumerates the 3+3 and the TPI design with the one-of-six stopping rule
/// for 1..=`max_doses` levels and compares cohort logs, path probabilities,
/// and selected MTDs.
pub fn check_assignment(config: &TpiConfig, max_doses: usize) -> Result<AssignmentReport> {
    let config = TpiConfig {
        stopping: StoppingRule::OneOfSixBelowExcluded,
        max_patients: config.cohort_size * 100,
        ..*config
    };
    let mut report = AssignmentReport::default();
    for num_doses in 1..=max_doses {
        let curve = DoseToxicityCurve::new(ENUMERATION_CURVE[..num_doses].to_vec())?;
        let std = RuleDesign::standard(num_doses)?;
        let tpi = TpiDesign::new(config, num_doses)?;
        let max_cohorts = 2 * num_doses;

        let collect = |paths: Vec<crate::sim::TrialPath>| -> PathMap {
            paths
                .into_iter()
                .map(|p| (p.outcome.cohort_log, (p.probability, p.outcome.mtd)))
                .collect()
        };
        let std_paths = enumerate_paths(&std, &curve, max_cohorts)?;
        let tpi_paths = enumerate_paths(&tpi, &curve, max_cohorts)?;
        // 3+3 MTDs come from the standard heuristic on the final groups.
        for p in &std_paths.paths {
            let heuristic = select_mtd_standard(&p.outcome.groups, 3);
            let tpi_rule = tpi_select_mtd(&p.outcome.groups, p.outcome.excluded_from, &config);
            if heuristic != p.outcome.mtd || tpi_rule != heuristic {
                report.mismatches.push(AssignmentMismatch {
                    num_doses,
                    cohort_log: p.outcome.cohort_log.clone(),
                    detail: format!(
                        "declared {:?}, standard rule {:?}, TPI estimate {:?}",
                        p.outcome.mtd, heuristic, tpi_rule
                    ),
                });
            }
        }
        if tpi_paths.truncated_probability > 0.0 {
            report.mismatches.push(AssignmentMismatch {
                num_doses,
                cohort_log: Vec::new(),
                detail: format!(
                    "TPI paths exceed {max_cohorts} cohorts with probability {}",
                    tpi_paths.truncated_probability
                ),
            });
        }
        let std_map = collect(std_paths.paths);
        let tpi_map = collect(tpi_paths.paths);
        report.paths_checked += std_map.len();

        for (log, &(p, mtd)) in &std_map {
            let detail = match tpi_map.get(log) {
                None => Some("path absent under TPI".to_string()),
                Some(&(q, _)) if (p - q).abs() > 1e-12 => {
                    Some(format!("probability {p} vs {q}"))
                }
                Some(&(_, tpi_mtd)) if tpi_mtd != mtd => {
                    Some(format!("MTD {mtd:?} vs {tpi_mtd:?}"))
                }
                Some(_) => None,
            };
            if let Some(detail) = detail {
                report.mismatches.push(AssignmentMismatch {
                    num_doses,
                    cohort_log: log.clone(),
                    detail,
                });
            }
        }
        for log in tpi_map.keys().filter(|log| !std_map.contains_key(*log)) {
            report.mismatches.push(AssignmentMismatch {
                num_doses,
                cohort_log: log.clone(),
                detail: "path absent under 3+3".to_string(),
            });
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsotonicFailure {
    pub cohort_log: Vec<Cohort>,
    pub p_target: f64,
    pub standard: Option<DoseLevel>,
    pub isotonic: Option<DoseLevel>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IsotonicReport {
    pub paths_checked: usize,
    pub total_probability: f64,
    pub failures: Vec<IsotonicFailure>,
}

impl IsotonicReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && (self.total_probability - 1.0).abs() <= 1e-12
    }
}

/// Over every completed 3+3 path on `num_doses` levels, compares the
/// standard MTD with the largest dose whose isotonic fit stays at or below
/// each target.
pub fn check_isotonic(num_doses: usize, p_targets: &[f64]) -> Result<IsotonicReport> {
    let curve = DoseToxicityCurve::new(ENUMERATION_CURVE[..num_doses].to_vec())?;
    let design = RuleDesign::standard(num_doses)?;
    let paths = enumerate_paths(&design, &curve, 2 * num_doses)?;
    let mut report = IsotonicReport {
        paths_checked: paths.paths.len(),
        total_probability: paths.total_probability(),
        failures: Vec::new(),
    };
    for p in &paths.paths {
        let standard = select_mtd_standard(&p.outcome.groups, 3);
        let rates = empirical_rates(&p.outcome.groups);
        let fit = pava(&rates.values, &rates.weights)?;
        for &p_target in p_targets {
            let isotonic = mtd_largest_below(&fit, p_target, &rates.doses);
            if isotonic != standard {
                report.failures.push(IsotonicFailure {
                    cohort_log: p.outcome.cohort_log.clone(),
                    p_target,
                    standard,
                    isotonic,
                });
            }
        }
    }
    Ok(report)
}
