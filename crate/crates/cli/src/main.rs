use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dosefind::equivalence::{
    check_assignment, check_isotonic, stability_diffs, table_diffs, ISOTONIC_TARGETS,
};
use dosefind::isotonic::{empirical_rates, mtd_closest, mtd_largest_below, pava};
use dosefind::rule_designs::{monitoring_table, table2, CellDiff};
use dosefind::sim::{simulate, SimulationSummary, DEFAULT_THRESHOLDS, MAX_ENUMERATION_DOSES};
use dosefind::tpi::{tpi_monitoring_table, DecisionMetric, TpiConfig};
use dosefind::worstcase::{curve_grid, max_series_discrepancy, WorstCaseDesign};
use dosefind::{DoseGroupRecord, DoseLevel};

mod config;
mod output;

use config::RunArgs;
use output::{num, Style};

const USAGE: u8 = 2;
const VERIFICATION: u8 = 3;
const SERIES_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "dosefind", version, about = "Phase I dose-finding designs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print a design's monitoring table.
    Table(TableArgs),
    /// Worst-case probability of selecting an MTD with true DLT rate >= v.
    WorstCase(WorstCaseArgs),
    /// Monte Carlo operating characteristics.
    Simulate(SimulateArgs),
    /// Check that the TPI design reproduces the 3+3 and that the 3+3 MTD is
    /// an isotonic estimate.
    Equivalence(EquivalenceArgs),
    /// Fit isotonic DLT rates to observed counts and select an MTD.
    Isotonic(IsotonicArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct TableArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: TableFormat,
    /// Patient counts to tabulate for TPI.
    #[arg(long, value_delimiter = ',', default_value = "3,6")]
    group_sizes: Vec<u32>,
}

#[derive(Debug, Args)]
struct WorstCaseArgs {
    /// Evaluate at these values instead of a grid.
    #[arg(long, value_delimiter = ',', conflicts_with = "grid")]
    v: Option<Vec<f64>>,
    /// Grid as `start:stop:step`.
    #[arg(long, default_value = "0.05:0.95:0.05")]
    grid: String,
    /// Write the CSV here instead of stdout.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Render the curves as SVG.
    #[arg(long, value_name = "PATH")]
    svg: Option<PathBuf>,
    /// Cross-check the closed forms against the series.
    #[arg(long)]
    verify: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Write the JSON summary here; the table then goes to stdout.
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EquivalenceArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Only run the isotonic check.
    #[arg(long)]
    isotonic_only: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MtdRule {
    LargestBelow,
    Closest,
}

#[derive(Debug, Args)]
struct IsotonicArgs {
    /// Observed counts per dose as `t/n`, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    counts: Vec<String>,
    #[arg(long, default_value_t = 0.2)]
    p_target: f64,
    #[arg(long, value_enum, default_value = "largest-below")]
    rule: MtdRule,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let style = Style::detect();
    let result = match cli.command {
        Command::Table(args) => cmd_table(args),
        Command::WorstCase(args) => cmd_worst_case(args, &style),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Equivalence(args) => cmd_equivalence(args, &style),
        Command::Isotonic(args) => cmd_isotonic(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE)
        }
    }
}

fn write_or_print(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_table(args: TableArgs) -> Result<ExitCode> {
    let run = args.run.resolve()?;
    let table = match run.rule_config(1)? {
        Some(rule) => monitoring_table(&rule)?,
        None => tpi_monitoring_table(&run.tpi, &args.group_sizes)?,
    };
    match args.format {
        TableFormat::Text => print!("{}", table.render_text()),
        TableFormat::Csv => print!("{}", table.render_csv()),
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, step] = parts[..] else {
        bail!("grid: expected start:stop:step, got `{spec}`");
    };
    let parse = |s: &str| s.trim().parse::<f64>().with_context(|| format!("grid: bad number `{s}`"));
    let (a, b, step) = (parse(a)?, parse(b)?, parse(step)?);
    if step.is_nan() || step <= 0.0 || b < a || !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
        bail!("grid: need 0 <= start <= stop <= 1 and step > 0, got `{spec}`");
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    // Integer multiples avoid accumulating rounding error.
    Ok((0..=count).map(|i| a + i as f64 * step).collect())
}

fn cmd_worst_case(args: WorstCaseArgs, style: &Style) -> Result<ExitCode> {
    let grid = match &args.v {
        Some(values) => values.clone(),
        None => parse_grid(&args.grid)?,
    };
    let table = curve_grid(&WorstCaseDesign::ALL, &grid)?;
    write_or_print(args.output.as_ref(), &output::grid_csv(&table))?;
    if let Some(path) = &args.svg {
        std::fs::write(path, output::grid_svg(&table))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    if args.verify {
        let interior: Vec<f64> = grid.iter().copied().filter(|v| *v > 0.0 && *v < 1.0).collect();
        let gap = max_series_discrepancy(&WorstCaseDesign::ALL, &interior, 1e-15)?;
        let pass = gap <= SERIES_TOLERANCE;
        eprintln!(
            "{} closed form vs series: max discrepancy {gap:.3e} (tolerance {SERIES_TOLERANCE:e})",
            style.verdict(pass)
        );
        if !pass {
            return Ok(ExitCode::from(VERIFICATION));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn summary_table(s: &SimulationSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "replications {}  seed {}", s.reps, s.seed);
    let _ = writeln!(out, "{:>6} {:>12} {:>14}", "dose", "P(MTD)", "mean patients");
    for (i, (p, n)) in s
        .mtd_distribution
        .by_dose
        .iter()
        .zip(&s.mean_patients_per_dose)
        .enumerate()
    {
        let _ = writeln!(out, "{:>6} {:>12.4} {:>14.3}", i + 1, p, n);
    }
    let _ = writeln!(out, "{:>6} {:>12.4}", "none", s.mtd_distribution.none);
    let _ = writeln!(
        out,
        "mean patients {:.3}  mean DLTs {:.3}  max patients {}",
        s.mean_total_patients, s.mean_total_dlts, s.max_total_patients
    );
    for t in &s.prob_mtd_rate_at_least {
        let _ = writeln!(out, "P(true rate at MTD >= {}) = {:.4}", t.threshold, t.probability);
    }
    out
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let run = args.run.resolve()?;
    let curve = run.curve()?;
    let design = run.design_config(curve.num_doses())?.build()?;
    let summary = simulate(&design, &curve, run.reps, run.seed, &DEFAULT_THRESHOLDS)?;
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    let table = summary_table(&summary);
    match &args.json {
        Some(path) => {
            std::fs::write(path, json).with_context(|| format!("cannot write {}", path.display()))?;
            print!("{table}");
        }
        None => {
            print!("{json}");
            eprint!("{table}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn describe_diffs(diffs: &[CellDiff]) -> String {
    let sym = |a: Option<dosefind::Action>| a.map_or("-", |a| a.symbol());
    diffs
        .iter()
        .map(|d| format!("({},{}) 3+3 {} vs TPI {}", d.patients, d.dlts, sym(d.left), sym(d.right)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn cmd_equivalence(args: EquivalenceArgs, style: &Style) -> Result<ExitCode> {
    let run = args.run.resolve()?;
    let config = run.tpi;
    let mut first_failure: Option<String> = None;
    let mut record = |pass: bool, what: &str, detail: String| {
        println!("{} {what}: {detail}", style.verdict(pass));
        if !pass && first_failure.is_none() {
            first_failure = Some(format!("{what}: {detail}"));
        }
    };

    if !args.isotonic_only {
        println!("{}", style.bold("Monitoring table against the 3+3"));
        let diffs = table_diffs(&config)?;
        let name = |m: DecisionMetric| match m {
            DecisionMetric::LengthNormalized => "length-normalized",
            DecisionMetric::RawMass => "raw-mass",
        };
        let detail = |d: &[CellDiff]| {
            if d.is_empty() {
                format!("all {} cells agree", table2().len())
            } else {
                format!("cells differ: {}", describe_diffs(d))
            }
        };
        record(diffs.is_empty(), &format!("table ({})", name(config.metric)), detail(&diffs));
        let other = match config.metric {
            DecisionMetric::LengthNormalized => DecisionMetric::RawMass,
            DecisionMetric::RawMass => DecisionMetric::LengthNormalized,
        };
        let other_diffs = table_diffs(&TpiConfig {
            metric: other,
            ..config
        })?;
        println!("  for comparison, {}: {}", name(other), detail(&other_diffs));
        for p in stability_diffs(&config, &[config.p_target - 0.01, config.p_target + 0.01], &[
            config.xi - 0.01,
            config.xi + 0.01,
        ])? {
            let note = if p.diffs.is_empty() {
                "unchanged".to_string()
            } else {
                describe_diffs(&p.diffs)
            };
            println!("  perturbed {}: {note}", p.label);
        }

        println!("{}", style.bold("Trial paths under the modified stopping rule"));
        let report = check_assignment(&config, MAX_ENUMERATION_DOSES)?;
        let detail = match report.mismatches.first() {
            None => format!("{} paths over 1..={MAX_ENUMERATION_DOSES} doses identical", report.paths_checked),
            Some(m) => format!(
                "{} mismatches; first at D={} log {:?}: {}",
                report.mismatches.len(),
                m.num_doses,
                m.cohort_log
                    .iter()
                    .map(|c| (c.dose.get(), c.size, c.dlts))
                    .collect::<Vec<_>>(),
                m.detail
            ),
        };
        record(report.passed(), "assignment", detail);
    }

    println!("{}", style.bold("Isotonic reading of the 3+3 MTD"));
    for num_doses in 1..=MAX_ENUMERATION_DOSES {
        let report = check_isotonic(num_doses, &ISOTONIC_TARGETS)?;
        let detail = match report.failures.first() {
            None => format!(
                "{} paths, total probability {}, all targets agree",
                report.paths_checked,
                num(report.total_probability)
            ),
            Some(f) => format!(
                "path {:?} at p_target {}: standard {:?}, isotonic {:?}",
                f.cohort_log
                    .iter()
                    .map(|c| (c.dose.get(), c.size, c.dlts))
                    .collect::<Vec<_>>(),
                num(f.p_target),
                f.standard.map(DoseLevel::get),
                f.isotonic.map(DoseLevel::get)
            ),
        };
        record(report.passed(), &format!("isotonic D={num_doses}"), detail);
    }

    Ok(match first_failure {
        None => ExitCode::SUCCESS,
        Some(f) => {
            eprintln!("equivalence failed: {f}");
            ExitCode::from(VERIFICATION)
        }
    })
}

fn parse_counts(counts: &[String]) -> Result<Vec<DoseGroupRecord>> {
    counts
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let bad = || format!("counts: dose {} has malformed pair `{pair}` (expected t/n)", i + 1);
            let (t, n) = pair.trim().split_once('/').with_context(bad)?;
            let t: u32 = t.trim().parse().with_context(bad)?;
            let n: u32 = n.trim().parse().with_context(bad)?;
            DoseGroupRecord::new(n, t).with_context(bad)
        })
        .collect()
}

fn cmd_isotonic(args: IsotonicArgs) -> Result<ExitCode> {
    if !(0.0..=1.0).contains(&args.p_target) {
        bail!("p_target: must lie in [0, 1], got {}", args.p_target);
    }
    let groups = parse_counts(&args.counts)?;
    let rates = empirical_rates(&groups);
    if rates.values.is_empty() {
        bail!("counts: no dose has any patients");
    }
    let fit = pava(&rates.values, &rates.weights)?;
    println!("{:>5} {:>9} {:>16} {:>16}", "dose", "t/n", "empirical", "isotonic");
    for ((dose, y), z) in rates.doses.iter().zip(&rates.values).zip(&fit.fitted) {
        let g = groups[dose.index()];
        println!(
            "{:>5} {:>9} {:>16} {:>16}",
            dose.get(),
            format!("{}/{}", g.dlts, g.patients),
            num(*y),
            num(*z)
        );
    }
    let show = |m: Option<DoseLevel>| m.map_or("none".to_string(), |d| format!("dose {d}"));
    let below = mtd_largest_below(&fit, args.p_target, &rates.doses);
    let closest = mtd_closest(&fit, args.p_target, &rates.doses);
    println!("p_target {}", num(args.p_target));
    println!("largest dose with fit <= p_target: {}", show(below));
    println!("dose with fit closest to p_target: {}", show(closest));
    let chosen = match args.rule {
        MtdRule::LargestBelow => below,
        MtdRule::Closest => closest,
    };
    println!("MTD ({}): {}", args.rule.to_possible_value().unwrap().get_name(), show(chosen));
    Ok(ExitCode::SUCCESS)
}
