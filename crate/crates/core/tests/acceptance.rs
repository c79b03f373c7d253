//! Acceptance report. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use dosefind::equivalence::{
    check_assignment, check_isotonic, stability_diffs, table_diffs, ISOTONIC_TARGETS,
};
use dosefind::isotonic::{brute_force_isotonic, pava};
use dosefind::tpi::{DecisionMetric, TpiConfig};
use dosefind::worstcase::{
    max_series_discrepancy, r_closed_form, r_monte_carlo, WorstCaseDesign, WorstCaseQuery,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const QUOTE_TOL: f64 = 0.005;
const SERIES_TERM_TOL: f64 = 1e-15;
const SERIES_TOL: f64 = 1e-12;
const MC_REPS: u64 = 1_000_000;
const MC_SIGMAS: f64 = 3.0;
const MC_TRUNCATION_LIMIT: f64 = 1e-3;
const MC_SEED: u64 = 20_261_014;
const MC_LEVELS: usize = 200;
const MC_TOXIC_FROM: usize = 3;
const PROB_SUM_TOL: f64 = 1e-12;
const PAVA_TOL: f64 = 1e-12;
const PAVA_INSTANCES: usize = 1000;
const PAVA_SEED: u64 = 7;

struct Verdict {
    pass: bool,
    detail: String,
}

fn r(design: WorstCaseDesign, v: f64) -> f64 {
    r_closed_form(&WorstCaseQuery::new(design, v).unwrap()).unwrap()
}

fn criterion1() -> Verdict {
    let r33 = r(WorstCaseDesign::D3p3, 0.25);
    let rh = r(WorstCaseDesign::Hybrid123, 0.25);
    let below44 = 1.0 - r(WorstCaseDesign::D4p4, 0.15);
    Verdict {
        pass: (r33 - 0.57).abs() <= QUOTE_TOL && (rh - 0.74).abs() <= QUOTE_TOL && below44 >= 0.30,
        detail: format!("r_3+3(0.25)={r33:.5}, r_hybrid(0.25)={rh:.5}, 1-r_4+4(0.15)={below44:.5}"),
    }
}

fn criterion2() -> Verdict {
    let grid: Vec<f64> = (1..=19).map(|i| f64::from(i) * 0.05).collect();
    let worst = max_series_discrepancy(&WorstCaseDesign::ALL, &grid, SERIES_TERM_TOL).unwrap();
    Verdict {
        pass: worst <= SERIES_TOL,
        detail: format!("max |closed form - series| = {worst:.3e} over 4 designs x 19 points"),
    }
}

fn criterion3() -> Verdict {
    let mut pass = true;
    let mut worst_z = 0.0f64;
    let mut worst_trunc = 0.0f64;
    for (i, &design) in WorstCaseDesign::ALL.iter().enumerate() {
        for (j, &v) in [0.15, 0.25, 0.40].iter().enumerate() {
            let q = WorstCaseQuery::new(design, v).unwrap();
            let exact = r_closed_form(&q).unwrap();
            let seed = MC_SEED + (i * 3 + j) as u64;
            let mc = r_monte_carlo(&q, MC_TOXIC_FROM, MC_LEVELS, MC_REPS, seed).unwrap();
            let se = (exact * (1.0 - exact) / MC_REPS as f64).sqrt();
            let z = (mc.estimate - exact).abs() / se;
            worst_z = worst_z.max(z);
            worst_trunc = worst_trunc.max(mc.truncated_fraction);
            if z > MC_SIGMAS || mc.truncated_fraction >= MC_TRUNCATION_LIMIT {
                pass = false;
                println!(
                    "    {} v={v}: estimate {:.5} vs {exact:.5} ({z:.2} SE), truncated {:.2e}",
                    design.label(),
                    mc.estimate,
                    mc.truncated_fraction
                );
            }
        }
    }
    Verdict {
        pass,
        detail: format!("12 runs of {MC_REPS}: worst |z| = {worst_z:.2}, worst truncated = {worst_trunc:.1e}"),
    }
}

fn criterion4() -> Verdict {
    let base = TpiConfig::matching_standard_design();
    let normalized = table_diffs(&base).unwrap();
    let raw = TpiConfig {
        metric: DecisionMetric::RawMass,
        ..base
    };
    let raw_cells: Vec<(u32, u32)> = table_diffs(&raw)
        .unwrap()
        .iter()
        .map(|d| (d.patients, d.dlts))
        .collect();
    let sym = |a: Option<dosefind::Action>| a.map_or("-", |a| a.symbol());
    let stability = stability_diffs(&base, &[0.16, 0.18], &[0.69, 0.71]).unwrap();
    let unstable: Vec<String> = stability
        .iter()
        .filter(|p| !p.diffs.is_empty())
        .map(|p| {
            let cells: Vec<String> = p
                .diffs
                .iter()
                .map(|d| format!("({},{}) {}->{}", d.patients, d.dlts, sym(d.left), sym(d.right)))
                .collect();
            format!("{}: {}", p.label, cells.join(" "))
        })
        .collect();
    let table_ok = normalized.is_empty();
    let raw_ok = raw_cells == [(3, 1), (6, 1)];
    Verdict {
        pass: table_ok && raw_ok && unstable.is_empty(),
        detail: format!(
            "length-normalized table {}; raw mass differs at {raw_cells:?}; stability {}",
            if table_ok { "matches" } else { "differs" },
            if unstable.is_empty() {
                "holds".to_string()
            } else {
                format!("broken by {}", unstable.join("; "))
            }
        ),
    }
}

fn criterion5() -> Verdict {
    let report = check_isotonic(4, &ISOTONIC_TARGETS).unwrap();
    let prob_ok = (report.total_probability - 1.0).abs() <= PROB_SUM_TOL;
    Verdict {
        pass: report.failures.is_empty() && prob_ok,
        detail: format!(
            "{} paths, total probability 1{:+.1e}, {} disagreements",
            report.paths_checked,
            report.total_probability - 1.0,
            report.failures.len()
        ),
    }
}

fn criterion6() -> Verdict {
    let report = check_assignment(&TpiConfig::matching_standard_design(), 4).unwrap();
    for m in report.mismatches.iter().take(3) {
        println!("    D={} {:?}: {}", m.num_doses, m.cohort_log, m.detail);
    }
    Verdict {
        pass: report.passed(),
        detail: format!(
            "{} paths over D=1..4, {} mismatches",
            report.paths_checked,
            report.mismatches.len()
        ),
    }
}

fn criterion7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(PAVA_SEED);
    let mut worst = 0.0f64;
    let mut broken = 0usize;
    for _ in 0..PAVA_INSTANCES {
        let len = rng.random_range(1..=7);
        let values: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let weights: Vec<f64> = (0..len).map(|_| f64::from(rng.random_range(1..=6u32))).collect();
        let fit = pava(&values, &weights).unwrap();
        let oracle = brute_force_isotonic(&values, &weights).unwrap();
        for (a, b) in fit.fitted.iter().zip(&oracle.fitted) {
            worst = worst.max((a - b).abs());
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mass_in: f64 = values.iter().zip(&weights).map(|(y, w)| y * w).sum();
        let mass_out: f64 = fit.fitted.iter().zip(&weights).map(|(z, w)| z * w).sum();
        let ok = fit.input == values
            && fit.weights == weights
            && fit.fitted.len() == len
            && fit.fitted.windows(2).all(|w| w[0] <= w[1] + PAVA_TOL)
            && fit.fitted.iter().all(|&z| z >= lo - PAVA_TOL && z <= hi + PAVA_TOL)
            && (mass_in - mass_out).abs() <= PAVA_TOL
            && fit.weighted_sse() <= oracle.weighted_sse() + PAVA_TOL;
        if !ok {
            broken += 1;
        }
    }
    Verdict {
        pass: worst <= PAVA_TOL && broken == 0,
        detail: format!("{PAVA_INSTANCES} instances: max deviation {worst:.2e}, {broken} invariant violations"),
    }
}

fn criterion8() -> Verdict {
    let r44 = r(WorstCaseDesign::D4p4, 0.25);
    let r33 = r(WorstCaseDesign::D3p3, 0.25);
    let rh = r(WorstCaseDesign::Hybrid123, 0.25);
    let r22 = r(WorstCaseDesign::D2p2, 0.25);
    Verdict {
        pass: r44 < r33 && r33 < rh && rh < r22,
        detail: format!("4+4 {r44:.4} < 3+3 {r33:.4} < hybrid {rh:.4} < 2+2 {r22:.4}"),
    }
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("quoted worst-case probabilities", criterion1),
        ("series oracle", criterion2),
        ("Monte Carlo consistency", criterion3),
        ("TPI monitoring table equivalence", criterion4),
        ("isotonic equivalence of the 3+3 MTD", criterion5),
        ("identical TPI and 3+3 assignment", criterion6),
        ("PAVA matches brute force", criterion7),
        ("worst-case ordering at v = 0.25", criterion8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = check();
        let status = if verdict.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {} {status} {name} ({:.2?}): {}",
            i + 1,
            start.elapsed(),
            verdict.detail
        );
        if !verdict.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
