//! The 3+3 standard design and its rule-based relatives.
//!
//! All variants share the 3+3 DLT thresholds: after the first cohort at a
//! dose, 0 DLTs escalates, 1 DLT adds a second cohort and 2 or more declares
//! the dose unacceptable. After the second cohort, at most 1 DLT escalates.
//! The 2+2 and 4+4 variants change only the cohort size. The 1+2+3/3+3 hybrid
//! treats single patients per dose until the first DLT, bridges that dose to a
//! group of three with two more patients, and runs the 3+3 from then on.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trial::{Action, Design, DoseGroupRecord, DoseLevel, Plan, TrialState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleScheme {
    /// c+c design with `cohort_size` in {2, 3, 4}.
    Symmetric { cohort_size: u32 },
    /// 1+2+3/3+3 accelerated hybrid.
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleDesignConfig {
    pub scheme: RuleScheme,
    pub num_doses: usize,
}

impl RuleDesignConfig {
    pub fn standard(num_doses: usize) -> Result<Self> {
        Self::symmetric(3, num_doses)
    }

    pub fn symmetric(cohort_size: u32, num_doses: usize) -> Result<Self> {
        check_cohort_size(cohort_size)?;
        if num_doses == 0 {
            return Err(Error::NoDoses);
        }
        Ok(Self {
            scheme: RuleScheme::Symmetric { cohort_size },
            num_doses,
        })
    }

    pub fn hybrid(num_doses: usize) -> Result<Self> {
        if num_doses == 0 {
            return Err(Error::NoDoses);
        }
        Ok(Self {
            scheme: RuleScheme::Hybrid,
            num_doses,
        })
    }

    /// Cohort size of the standard stage.
    pub fn cohort_size(&self) -> u32 {
        match self.scheme {
            RuleScheme::Symmetric { cohort_size } => cohort_size,
            RuleScheme::Hybrid => 3,
        }
    }

    /// Patients in a full dose group.
    pub fn group_cap(&self) -> u32 {
        2 * self.cohort_size()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_doses == 0 {
            return Err(Error::NoDoses);
        }
        if let RuleScheme::Symmetric { cohort_size } = self.scheme {
            check_cohort_size(cohort_size)?;
        }
        Ok(())
    }
}

fn check_cohort_size(cohort_size: u32) -> Result<()> {
    if !(2..=4).contains(&cohort_size) {
        return Err(Error::param(
            "cohort_size",
            format!("symmetric rule designs use cohorts of 2, 3 or 4, got {cohort_size}"),
        ));
    }
    Ok(())
}

/// Standard 3+3 rules for a dose group of 3 or 6 patients.
pub fn std33_decision(patients: u32, dlts: u32) -> Result<Action> {
    symmetric_decision(3, patients, dlts)
}

pub fn symmetric_decision(cohort_size: u32, patients: u32, dlts: u32) -> Result<Action> {
    check_cohort_size(cohort_size)?;
    if dlts > patients {
        return Err(Error::TooManyDlts { patients, dlts });
    }
    if patients == cohort_size {
        Ok(match dlts {
            0 => Action::Escalate,
            1 => Action::Stay,
            _ => Action::DeEscalateUnacceptable,
        })
    } else if patients == 2 * cohort_size {
        Ok(if dlts <= 1 {
            Action::Escalate
        } else {
            Action::DeEscalateUnacceptable
        })
    } else {
        Err(Error::UnreachableCell { patients, dlts })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HybridStage {
    Accelerate,
    Standard,
}

impl HybridStage {
    /// The hybrid leaves the accelerate stage for good at the first DLT.
    pub fn of(state: &TrialState) -> Self {
        if state.total_dlts() == 0 {
            HybridStage::Accelerate
        } else {
            HybridStage::Standard
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HybridDirective {
    pub action: Action,
    /// Size of the next cohort when it differs from the stage default.
    pub next_cohort: Option<u32>,
}

pub fn hybrid123_decision(stage: HybridStage, patients: u32, dlts: u32) -> Result<HybridDirective> {
    if dlts > patients {
        return Err(Error::TooManyDlts { patients, dlts });
    }
    match stage {
        HybridStage::Accelerate => match (patients, dlts) {
            (1, 0) => Ok(HybridDirective {
                action: Action::Escalate,
                next_cohort: None,
            }),
            (1, 1) => Ok(HybridDirective {
                action: Action::Stay,
                next_cohort: Some(2),
            }),
            _ => Err(Error::UnreachableCell { patients, dlts }),
        },
        HybridStage::Standard => Ok(HybridDirective {
            action: std33_decision(patients, dlts)?,
            next_cohort: None,
        }),
    }
}

/// Highest dose whose full group (`2 * cohort_size` patients) saw at most one
/// DLT.
pub fn select_mtd_standard(groups: &[DoseGroupRecord], cohort_size: u32) -> Option<DoseLevel> {
    groups
        .iter()
        .rposition(|g| g.patients >= 2 * cohort_size && g.dlts <= 1)
        .map(DoseLevel::from_index)
}

/// A monitoring table: (patients, DLTs) at the current dose to an action.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitoringTable {
    cells: BTreeMap<(u32, u32), Action>,
}

/// A cell on which two tables disagree. `None` marks a missing cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellDiff {
    pub patients: u32,
    pub dlts: u32,
    pub left: Option<Action>,
    pub right: Option<Action>,
}

impl MonitoringTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, patients: u32, dlts: u32, action: Action) {
        self.cells.insert((patients, dlts), action);
    }

    pub fn get(&self, patients: u32, dlts: u32) -> Option<Action> {
        self.cells.get(&(patients, dlts)).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), Action)> + '_ {
        self.cells.iter().map(|(&k, &v)| (k, v))
    }

    /// Distinct patient counts, ascending.
    pub fn columns(&self) -> Vec<u32> {
        let mut cols: Vec<u32> = self.cells.keys().map(|&(n, _)| n).collect();
        cols.dedup();
        cols
    }

    pub fn max_dlts(&self) -> u32 {
        self.cells.keys().map(|&(_, t)| t).max().unwrap_or(0)
    }

    /// Within each column, more DLTs never move the action toward escalation.
    pub fn is_column_monotone(&self) -> bool {
        self.columns().into_iter().all(|n| {
            let col: Vec<u8> = self
                .cells
                .range((n, 0)..=(n, u32::MAX))
                .filter_map(|(_, a)| a.caution())
                .collect();
            col.windows(2).all(|w| w[0] <= w[1])
        })
    }

    /// Cells of `self` that `other` lacks or assigns differently.
    pub fn diff_on_domain(&self, other: &MonitoringTable) -> Vec<CellDiff> {
        self.cells
            .iter()
            .filter_map(|(&(n, t), &a)| {
                let b = other.get(n, t);
                (b != Some(a)).then_some(CellDiff {
                    patients: n,
                    dlts: t,
                    left: Some(a),
                    right: b,
                })
            })
            .collect()
    }

    /// Aligned text: rows are DLT counts, columns patient counts.
    pub fn render_text(&self) -> String {
        let cols = self.columns();
        let mut out = String::new();
        let _ = write!(out, "{:>5} |", "DLTs");
        for n in &cols {
            let _ = write!(out, " {n:>3}");
        }
        out.push('\n');
        out.push_str(&"-".repeat(7 + 4 * cols.len()));
        out.push('\n');
        for t in 0..=self.max_dlts() {
            let _ = write!(out, "{t:>5} |");
            for &n in &cols {
                let cell = self.get(n, t).map_or("", |a| a.symbol());
                let _ = write!(out, " {cell:>3}");
            }
            out.push('\n');
        }
        out
    }

    /// CSV with header `dlts,n<col>...`; missing cells are empty.
    pub fn render_csv(&self) -> String {
        let cols = self.columns();
        let mut out = String::from("dlts");
        for n in &cols {
            let _ = write!(out, ",n{n}");
        }
        out.push('\n');
        for t in 0..=self.max_dlts() {
            let _ = write!(out, "{t}");
            for &n in &cols {
                out.push(',');
                out.push_str(self.get(n, t).map_or("", |a| a.symbol()));
            }
            out.push('\n');
        }
        out
    }
}

/// The alternate (monitoring-table) depiction of the 3+3 rules, as printed.
pub fn table2() -> MonitoringTable {
    use Action::{DeEscalateUnacceptable as DU, Escalate as E, Stay as S};
    let mut table = MonitoringTable::new();
    for (t, a3, a6) in [
        (0, Some(E), E),
        (1, Some(S), E),
        (2, Some(DU), DU),
        (3, Some(DU), DU),
        (4, None, DU),
    ] {
        if let Some(a) = a3 {
            table.insert(3, t, a);
        }
        table.insert(6, t, a6);
    }
    table
}

/// Monitoring table over the cells a trial can actually reach.
pub fn monitoring_table(config: &RuleDesignConfig) -> Result<MonitoringTable> {
    config.validate()?;
    let c = config.cohort_size();
    let mut table = MonitoringTable::new();
    if config.scheme == RuleScheme::Hybrid {
        for t in 0..=1 {
            table.insert(1, t, hybrid123_decision(HybridStage::Accelerate, 1, t)?.action);
        }
    }
    // The second cohort only follows a first cohort with at most one DLT.
    for t in 0..=c {
        table.insert(c, t, symmetric_decision(c, c, t)?);
    }
    for t in 0..=(c + 1) {
        table.insert(2 * c, t, symmetric_decision(c, 2 * c, t)?);
    }
    Ok(table)
}

/// A runnable rule-based design.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RuleDesign {
    config: RuleDesignConfig,
}

impl RuleDesign {
    pub fn new(config: RuleDesignConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn standard(num_doses: usize) -> Result<Self> {
        Self::new(RuleDesignConfig::standard(num_doses)?)
    }

    pub fn config(&self) -> &RuleDesignConfig {
        &self.config
    }

    pub fn select_mtd(&self, groups: &[DoseGroupRecord]) -> Option<DoseLevel> {
        select_mtd_standard(groups, self.config.cohort_size())
    }

    /// Maps a table action onto the dose ladder: escalation is blocked by an
    /// excluded next dose and by the top of the ladder.
    fn in_context(&self, state: &TrialState, action: Action) -> Action {
        let full = state.current_group().patients >= self.config.group_cap();
        if action != Action::Escalate {
            return action;
        }
        if state.next_dose_excluded() {
            if full {
                Action::Stop {
                    mtd: Some(state.current_dose()),
                }
            } else {
                Action::Stay
            }
        } else if state.is_at_top() && !full {
            Action::Stay
        } else {
            Action::Escalate
        }
    }
}

impl Design for RuleDesign {
    fn num_doses(&self) -> usize {
        self.config.num_doses
    }

    fn plan(&self, state: &TrialState) -> Result<Plan> {
        let group = state.current_group();
        let c = self.config.cohort_size();
        match self.config.scheme {
            RuleScheme::Symmetric { .. } => match group.patients {
                0 => Ok(Plan::Enroll(c)),
                n if n == c => Ok(Plan::Enroll(c)),
                n if n == 2 * c && group.dlts <= 1 => Ok(Plan::Stop(Some(state.current_dose()))),
                n => Err(Error::UnreachableCell {
                    patients: n,
                    dlts: group.dlts,
                }),
            },
            RuleScheme::Hybrid => match group.patients {
                0 => Ok(Plan::Enroll(match HybridStage::of(state) {
                    HybridStage::Accelerate => 1,
                    HybridStage::Standard => 3,
                })),
                // Single-patient doses are bridged to a group of three.
                1 => Ok(Plan::Enroll(2)),
                3 => Ok(Plan::Enroll(3)),
                6 if group.dlts <= 1 => Ok(Plan::Stop(Some(state.current_dose()))),
                n => Err(Error::UnreachableCell {
                    patients: n,
                    dlts: group.dlts,
                }),
            },
        }
    }

    fn decide(&self, state: &TrialState) -> Result<Action> {
        let group = state.current_group();
        let raw = match self.config.scheme {
            RuleScheme::Symmetric { cohort_size } => {
                symmetric_decision(cohort_size, group.patients, group.dlts)?
            }
            RuleScheme::Hybrid => {
                let stage = if group.patients == 1 {
                    HybridStage::Accelerate
                } else {
                    HybridStage::Standard
                };
                hybrid123_decision(stage, group.patients, group.dlts)?.action
            }
        };
        Ok(self.in_context(state, raw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::{replay, run_trial, DoseToxicityCurve};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use Action::{DeEscalateUnacceptable as DU, Escalate as E, Stay as S};

    #[test]
    fn standard_rules() {
        assert_eq!(std33_decision(3, 0), Ok(E));
        assert_eq!(std33_decision(3, 1), Ok(S));
        assert_eq!(std33_decision(3, 2), Ok(DU));
        assert_eq!(std33_decision(6, 1), Ok(E));
        assert_eq!(std33_decision(6, 2), Ok(DU));
        assert_eq!(
            std33_decision(4, 1),
            Err(Error::UnreachableCell { patients: 4, dlts: 1 })
        );
        assert!(std33_decision(3, 4).is_err());
    }

    #[test]
    fn symmetric_rules() {
        assert_eq!(symmetric_decision(2, 2, 1), Ok(S));
        assert_eq!(symmetric_decision(4, 8, 1), Ok(E));
        assert_eq!(symmetric_decision(3, 3, 2), Ok(DU));
        assert!(symmetric_decision(5, 5, 0).is_err());
        assert!(symmetric_decision(2, 3, 0).is_err());
    }

    #[test]
    fn hybrid_rules() {
        let d = hybrid123_decision(HybridStage::Accelerate, 1, 0).unwrap();
        assert_eq!(d.action, E);
        let d = hybrid123_decision(HybridStage::Accelerate, 1, 1).unwrap();
        assert_eq!((d.action, d.next_cohort), (S, Some(2)));
        let d = hybrid123_decision(HybridStage::Standard, 6, 2).unwrap();
        assert_eq!(d.action, DU);
        assert!(hybrid123_decision(HybridStage::Accelerate, 3, 0).is_err());
        assert!(hybrid123_decision(HybridStage::Standard, 1, 0).is_err());
    }

    fn groups(pairs: &[(u32, u32)]) -> Vec<DoseGroupRecord> {
        pairs
            .iter()
            .map(|&(n, t)| DoseGroupRecord::new(n, t).unwrap())
            .collect()
    }

    #[test]
    fn standard_mtd_selection() {
        let mtd = |g: &[(u32, u32)]| select_mtd_standard(&groups(g), 3).map(DoseLevel::get);
        assert_eq!(mtd(&[(6, 0), (6, 1), (3, 2)]), Some(2));
        assert_eq!(mtd(&[(3, 3)]), None);
        assert_eq!(mtd(&[(6, 1), (6, 1), (6, 2)]), Some(2));
    }

    #[test]
    fn standard_table_matches_printed_table() {
        let table = monitoring_table(&RuleDesignConfig::standard(4).unwrap()).unwrap();
        assert_eq!(table, table2());
        assert_eq!(table.len(), 9);
        assert!(table.is_column_monotone());
    }

    #[test]
    fn variant_tables_cross_check_decisions() {
        for c in [2, 4] {
            let table = monitoring_table(&RuleDesignConfig::symmetric(c, 3).unwrap()).unwrap();
            assert_eq!(table.columns(), vec![c, 2 * c]);
            for ((n, t), a) in table.iter() {
                assert_eq!(symmetric_decision(c, n, t), Ok(a));
            }
            assert!(table.is_column_monotone());
        }
        let hybrid = monitoring_table(&RuleDesignConfig::hybrid(3).unwrap()).unwrap();
        assert_eq!(hybrid.columns(), vec![1, 3, 6]);
        for ((n, t), a) in hybrid.iter() {
            let stage = if n == 1 {
                HybridStage::Accelerate
            } else {
                HybridStage::Standard
            };
            assert_eq!(hybrid123_decision(stage, n, t).unwrap().action, a);
        }
    }

    #[test]
    fn csv_rendering() {
        let csv = table2().render_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "dlts,n3,n6");
        assert_eq!(lines[1], "0,E,E");
        assert_eq!(lines[2], "1,S,E");
        assert_eq!(lines[5], "4,,DU");
    }

    fn run(curve: &[f64], seed: u64) -> crate::trial::TrialOutcome {
        let design = RuleDesign::standard(curve.len()).unwrap();
        let curve = DoseToxicityCurve::new(curve.to_vec()).unwrap();
        run_trial(&design, &curve, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn forced_paths() {
        for seed in 0..5 {
            let all_toxic = run(&[1.0, 1.0], seed);
            assert_eq!(all_toxic.mtd, None);
            assert_eq!(all_toxic.total_patients(), 3);

            let safe = run(&[0.0, 0.0], seed);
            assert_eq!(safe.mtd, DoseLevel::new(2));
            assert!(safe.mtd_at_boundary);
            assert_eq!(safe.groups[1], DoseGroupRecord { patients: 6, dlts: 0 });

            let step = run(&[0.0, 1.0], seed);
            assert_eq!(step.mtd, DoseLevel::new(1));
            assert!(!step.mtd_at_boundary);
            assert_eq!(step.groups[1], DoseGroupRecord { patients: 3, dlts: 3 });
        }
    }

    #[test]
    fn hybrid_worst_case_path() {
        // Doses 1-2 are safe, dose 3 always toxic: accelerate, bridge, fall
        // back to dose 2 and complete its group.
        let design = RuleDesign::new(RuleDesignConfig::hybrid(4).unwrap()).unwrap();
        let curve = DoseToxicityCurve::new(vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let out = run_trial(&design, &curve, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let sizes: Vec<(usize, u32, u32)> = out
            .cohort_log
            .iter()
            .map(|c| (c.dose.get(), c.size, c.dlts))
            .collect();
        assert_eq!(sizes, vec![(1, 1, 0), (2, 1, 0), (3, 1, 1), (3, 2, 2), (2, 2, 0), (2, 3, 0)]);
        assert_eq!(out.mtd, DoseLevel::new(2));
        assert_eq!(replay(&design, &out.cohort_log).unwrap(), out);
    }
}
