//! Worst-case probability `r(v)` of selecting an MTD whose true DLT rate is
//! at least `v`.
//!
//! The worst case puts rate 0 on every dose below some level `d` and rate `v`
//! from `d` upward. On an unbounded dose ladder the probability of the safe
//! outcome (the MTD settling at `d - 1`) is a geometric series in the number
//! of doses climbed above `d`, with a closed form for each rule design.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rule_designs::{RuleDesign, RuleDesignConfig};
use crate::trial::{run_trial, DoseLevel, DoseToxicityCurve};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorstCaseDesign {
    D3p3,
    D2p2,
    D4p4,
    Hybrid123,
}

impl WorstCaseDesign {
    /// Column order of the worst-case CSV.
    pub const ALL: [WorstCaseDesign; 4] = [
        WorstCaseDesign::D3p3,
        WorstCaseDesign::D2p2,
        WorstCaseDesign::D4p4,
        WorstCaseDesign::Hybrid123,
    ];

    pub fn label(self) -> &'static str {
        match self {
            WorstCaseDesign::D3p3 => "3+3",
            WorstCaseDesign::D2p2 => "2+2",
            WorstCaseDesign::D4p4 => "4+4",
            WorstCaseDesign::Hybrid123 => "1+2+3/3+3",
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            WorstCaseDesign::D3p3 => "r_3p3",
            WorstCaseDesign::D2p2 => "r_2p2",
            WorstCaseDesign::D4p4 => "r_4p4",
            WorstCaseDesign::Hybrid123 => "r_hybrid123",
        }
    }

    pub fn rule_config(self, levels: usize) -> Result<RuleDesignConfig> {
        match self {
            WorstCaseDesign::D3p3 => RuleDesignConfig::symmetric(3, levels),
            WorstCaseDesign::D2p2 => RuleDesignConfig::symmetric(2, levels),
            WorstCaseDesign::D4p4 => RuleDesignConfig::symmetric(4, levels),
            WorstCaseDesign::Hybrid123 => RuleDesignConfig::hybrid(levels),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseQuery {
    pub design: WorstCaseDesign,
    pub v: f64,
}

impl WorstCaseQuery {
    pub fn new(design: WorstCaseDesign, v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::param("v", format!("must lie in [0, 1], got {v}")));
        }
        Ok(Self { design, v })
    }
}

fn check_v(v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("v", format!("must lie in (0, 1], got {v}")))
    }
}

/// Closed-form `r(v)`. `v = 0` returns the limit 1.
pub fn r_closed_form(q: &WorstCaseQuery) -> Result<f64> {
    if q.v == 0.0 {
        return Ok(1.0);
    }
    check_v(q.v)?;
    let v = q.v;
    let u = 1.0 - v;
    let r = match q.design {
        WorstCaseDesign::D3p3 => {
            let exit = 3.0 * v * v * u + v.powi(3);
            1.0 - (3.0 * v * u.powi(2) * (1.0 - u.powi(3)) + exit) / (1.0 - u.powi(3) * exit)
        }
        WorstCaseDesign::D2p2 => {
            1.0 - (2.0 * v * u * (1.0 - u.powi(2)) + v * v) / (1.0 - u.powi(2) * v * v)
        }
        WorstCaseDesign::D4p4 => {
            let exit = 1.0 - u.powi(4) - 4.0 * v * u.powi(3);
            1.0 - (4.0 * v * u.powi(3) * (1.0 - u.powi(4)) + exit) / (1.0 - u.powi(4) * exit)
        }
        WorstCaseDesign::Hybrid123 => {
            1.0 - v * (1.0 - u.powi(5)) / (1.0 - u * (1.0 - u.powi(5) - 5.0 * v * u.powi(4)))
        }
    };
    Ok(r.clamp(0.0, 1.0))
}

/// Per-design factors of the series `sum_k climb^k * settle * fall^k`.
///
/// `climb` is the chance of passing a toxic dose on the first cohort,
/// `settle` the chance that the highest visited dose is declared
/// unacceptable, and `fall` the chance that a passed toxic dose is declared
/// unacceptable when revisited.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesFactors {
    pub climb: f64,
    pub settle: f64,
    pub fall: f64,
}

pub fn series_factors(design: WorstCaseDesign, v: f64) -> SeriesFactors {
    let u = 1.0 - v;
    match design {
        WorstCaseDesign::D3p3 => {
            let fall = 3.0 * v * v * u + v.powi(3);
            SeriesFactors {
                climb: u.powi(3),
                settle: 3.0 * v * u.powi(2) * (1.0 - u.powi(3)) + fall,
                fall,
            }
        }
        WorstCaseDesign::D2p2 => SeriesFactors {
            climb: u.powi(2),
            settle: 2.0 * v * u * (1.0 - u.powi(2)) + v * v,
            fall: v * v,
        },
        WorstCaseDesign::D4p4 => {
            let fall = 1.0 - u.powi(4) - 4.0 * v * u.powi(3);
            SeriesFactors {
                climb: u.powi(4),
                settle: 4.0 * v * u.powi(3) * (1.0 - u.powi(4)) + fall,
                fall,
            }
        }
        WorstCaseDesign::Hybrid123 => SeriesFactors {
            climb: u,
            settle: v * (1.0 - u.powi(5)),
            fall: 1.0 - u.powi(5) - 5.0 * v * u.powi(4),
        },
    }
}

/// `1 - partial sum` of the series, adding terms while they are `>= tol`.
pub fn r_series(q: &WorstCaseQuery, tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::param("tol", format!("must be positive, got {tol}")));
    }
    if q.v == 0.0 {
        return Ok(1.0);
    }
    check_v(q.v)?;
    let f = series_factors(q.design, q.v);
    let ratio = f.climb * f.fall;
    let mut term = f.settle;
    let mut sum = 0.0;
    for _ in 0..10_000_000 {
        if term < tol {
            break;
        }
        sum += term;
        term *= ratio;
    }
    Ok((1.0 - sum).clamp(0.0, 1.0))
}

/// Zeros below `d`, `v` from `d` to `levels`.
pub fn worst_case_curve(v: f64, d: usize, levels: usize) -> Result<DoseToxicityCurve> {
    if d == 0 || d > levels {
        return Err(Error::DoseOutOfRange {
            dose: d,
            num_doses: levels,
        });
    }
    DoseToxicityCurve::new((1..=levels).map(|i| if i < d { 0.0 } else { v }).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    /// Fraction of runs that reached the top of the finite ladder.
    pub truncated_fraction: f64,
    pub reps: u64,
}

impl MonteCarloEstimate {
    pub fn std_error(&self) -> f64 {
        (self.estimate * (1.0 - self.estimate) / self.reps as f64).sqrt()
    }
}

const BATCH: u64 = 4096;

/// Fraction of simulated worst-case trials whose MTD has true rate `>= v`.
///
/// Replication `i` draws from ChaCha stream `i` of `seed`, so the estimate
/// does not depend on the number of worker threads.
pub fn r_monte_carlo(
    q: &WorstCaseQuery,
    d: usize,
    levels: usize,
    reps: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if reps == 0 {
        return Err(Error::param("reps", "must be at least 1"));
    }
    let curve = worst_case_curve(q.v, d, levels)?;
    let design = RuleDesign::new(q.design.rule_config(levels)?)?;
    let top = DoseLevel::from_index(levels - 1);

    let batches = reps.div_ceil(BATCH);
    let (unsafe_runs, truncated) = (0..batches)
        .into_par_iter()
        .map(|b| -> Result<(u64, u64)> {
            let mut counts = (0u64, 0u64);
            for rep in b * BATCH..((b + 1) * BATCH).min(reps) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(rep);
                let out = run_trial(&design, &curve, &mut rng)?;
                if out.mtd.is_some_and(|m| curve.prob(m) >= q.v) {
                    counts.0 += 1;
                }
                if out.groups[top.index()].is_visited() {
                    counts.1 += 1;
                }
            }
            Ok(counts)
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;

    Ok(MonteCarloEstimate {
        estimate: unsafe_runs as f64 / reps as f64,
        truncated_fraction: truncated as f64 / reps as f64,
        reps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub v: f64,
    pub r: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseGrid {
    pub designs: Vec<WorstCaseDesign>,
    pub rows: Vec<GridRow>,
}

pub fn curve_grid(designs: &[WorstCaseDesign], v_grid: &[f64]) -> Result<WorstCaseGrid> {
    let rows = v_grid
        .iter()
        .map(|&v| {
            let r = designs
                .iter()
                .map(|&design| r_closed_form(&WorstCaseQuery::new(design, v)?))
                .collect::<Result<Vec<_>>>()?;
            Ok(GridRow { v, r })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WorstCaseGrid {
        designs: designs.to_vec(),
        rows,
    })
}

/// Largest `|closed form - series|` over a grid.
pub fn max_series_discrepancy(designs: &[WorstCaseDesign], v_grid: &[f64], tol: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for &design in designs {
        for &v in v_grid {
            let q = WorstCaseQuery::new(design, v)?;
            worst = worst.max((r_closed_form(&q)? - r_series(&q, tol)?).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(design: WorstCaseDesign, v: f64) -> f64 {
        r_closed_form(&WorstCaseQuery::new(design, v).unwrap()).unwrap()
    }

    #[test]
    fn quoted_values() {
        assert!((r(WorstCaseDesign::D3p3, 0.25) - 0.5716).abs() < 5e-4);
        assert!((r(WorstCaseDesign::Hybrid123, 0.25) - 0.737).abs() < 5e-3);
        assert!(r(WorstCaseDesign::D4p4, 0.15) <= 0.70);
        assert!((r(WorstCaseDesign::D3p3, 0.30) - 0.4538).abs() < 1e-4);
    }

    #[test]
    fn boundaries() {
        for design in WorstCaseDesign::ALL {
            assert_eq!(r(design, 1.0), 0.0);
            assert_eq!(r(design, 0.0), 1.0);
            let q = WorstCaseQuery { design, v: 1.0 };
            assert_eq!(r_series(&q, 1e-3).unwrap(), 0.0);
            let bad = WorstCaseQuery { design, v: -0.1 };
            assert!(r_closed_form(&bad).is_err());
        }
        assert!(WorstCaseQuery::new(WorstCaseDesign::D3p3, 1.5).is_err());
    }

    #[test]
    fn series_matches_closed_form() {
        for (design, v) in [(WorstCaseDesign::D3p3, 0.25), (WorstCaseDesign::D2p2, 0.5)] {
            let q = WorstCaseQuery::new(design, v).unwrap();
            let diff = (r_series(&q, 1e-15).unwrap() - r_closed_form(&q).unwrap()).abs();
            assert!(diff <= 1e-12, "{design:?} at {v}: {diff}");
        }
    }

    #[test]
    fn curves() {
        let c = worst_case_curve(0.3, 2, 5).unwrap();
        assert_eq!(c.probs(), &[0.0, 0.3, 0.3, 0.3, 0.3]);
        assert_eq!(worst_case_curve(0.4, 1, 3).unwrap().probs(), &[0.4, 0.4, 0.4]);
        assert_eq!(worst_case_curve(0.0, 2, 3).unwrap().probs(), &[0.0, 0.0, 0.0]);
        assert!(worst_case_curve(0.3, 4, 3).is_err());
    }

    #[test]
    fn grid_ordering_at_quarter() {
        let grid = curve_grid(&WorstCaseDesign::ALL, &[0.25, 1.0]).unwrap();
        let [r33, r22, r44, rh] = grid.rows[0].r[..] else {
            panic!("four designs")
        };
        assert!(r44 < r33 && r33 < rh && rh < r22);
        assert!((r44 - 0.400).abs() < 1e-3 && (r22 - 0.765).abs() < 1e-3);
        assert!(grid.rows[1].r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn monte_carlo_certain_toxicity() {
        let q = WorstCaseQuery::new(WorstCaseDesign::D3p3, 1.0).unwrap();
        let est = r_monte_carlo(&q, 3, 10, 200, 5).unwrap();
        assert_eq!(est.estimate, 0.0);
        assert_eq!(est.truncated_fraction, 0.0);
    }
}
