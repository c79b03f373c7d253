//! Run configuration: an optional JSON file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use dosefind::rule_designs::RuleDesignConfig;
use dosefind::sim::DesignConfig;
use dosefind::tpi::{BetaParams, DecisionMetric, StoppingRule, TpiConfig, WeightConvention};
use dosefind::DoseToxicityCurve;
use serde::Deserialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DesignId {
    Std33,
    Sym2,
    Sym4,
    /// Symmetric c+c with `--cohort-size`.
    Symmetric,
    Hybrid123,
    Tpi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    LengthNormalized,
    RawMass,
}

impl From<MetricArg> for DecisionMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::LengthNormalized => DecisionMetric::LengthNormalized,
            MetricArg::RawMass => DecisionMetric::RawMass,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WeightArg {
    Variance,
    InverseVariance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StoppingArg {
    FixedSampleSize,
    OneOfSixBelowExcluded,
}

/// Keys accepted in the JSON config file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    design: Option<String>,
    cohort_size: Option<u32>,
    num_doses: Option<usize>,
    curve: Option<Vec<f64>>,
    p_target: Option<f64>,
    k1: Option<f64>,
    k2: Option<f64>,
    xi: Option<f64>,
    prior_alpha: Option<f64>,
    prior_beta: Option<f64>,
    max_patients: Option<u32>,
    metric: Option<String>,
    weight_convention: Option<String>,
    stopping: Option<String>,
    seed: Option<u64>,
    reps: Option<u64>,
}

/// Flags shared by the subcommands that build a design.
#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub design: Option<DesignId>,
    #[arg(long)]
    pub cohort_size: Option<u32>,
    #[arg(long)]
    pub num_doses: Option<usize>,
    /// True DLT probabilities, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub curve: Option<Vec<f64>>,
    #[arg(long)]
    pub p_target: Option<f64>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub k2: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Beta prior as `alpha,beta`.
    #[arg(long, value_delimiter = ',')]
    pub prior: Option<Vec<f64>>,
    #[arg(long)]
    pub max_patients: Option<u32>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    pub weight_convention: Option<WeightArg>,
    #[arg(long, value_enum)]
    pub stopping: Option<StoppingArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<u64>,
}

/// Fully merged configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub design: Option<DesignId>,
    pub cohort_size: Option<u32>,
    pub num_doses: Option<usize>,
    pub curve: Option<Vec<f64>>,
    pub tpi: TpiConfig,
    pub seed: u64,
    pub reps: u64,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_REPS: u64 = 10_000;

fn parse_enum<T: ValueEnum>(field: &str, value: &str) -> Result<T> {
    T::from_str(value, true).map_err(|_| {
        let names: Vec<String> = T::value_variants()
            .iter()
            .filter_map(|v| v.to_possible_value().map(|p| p.get_name().to_string()))
            .collect();
        anyhow::anyhow!("{field}: unknown value `{value}` (expected one of {})", names.join(", "))
    })
}

fn read_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("config: cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("config: invalid JSON in {}", path.display()))
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => read_file(path)?,
            None => FileConfig::default(),
        };
        let design = match (self.design, &file.design) {
            (Some(d), _) => Some(d),
            (None, Some(s)) => Some(parse_enum("design", s)?),
            (None, None) => None,
        };
        let metric = match (self.metric, &file.metric) {
            (Some(m), _) => m,
            (None, Some(s)) => parse_enum("metric", s)?,
            (None, None) => MetricArg::LengthNormalized,
        };
        let weights = match (self.weight_convention, &file.weight_convention) {
            (Some(w), _) => w,
            (None, Some(s)) => parse_enum("weight_convention", s)?,
            (None, None) => WeightArg::Variance,
        };
        let stopping = match (self.stopping, &file.stopping) {
            (Some(s), _) => s,
            (None, Some(s)) => parse_enum("stopping", s)?,
            (None, None) => StoppingArg::FixedSampleSize,
        };

        let base = TpiConfig::matching_standard_design();
        let (alpha, beta) = match self.prior.as_deref() {
            Some(&[a, b]) => (a, b),
            Some(other) => bail!("prior: expected `alpha,beta`, got {} values", other.len()),
            None => (
                file.prior_alpha.unwrap_or(base.prior.alpha),
                file.prior_beta.unwrap_or(base.prior.beta),
            ),
        };
        let prior = BetaParams::new(alpha, beta).context("prior")?;
        let cohort_size = self.cohort_size.or(file.cohort_size);
        let tpi = TpiConfig {
            p_target: self.p_target.or(file.p_target).unwrap_or(base.p_target),
            k1: self.k1.or(file.k1).unwrap_or(base.k1),
            k2: self.k2.or(file.k2).unwrap_or(base.k2),
            xi: self.xi.or(file.xi).unwrap_or(base.xi),
            prior,
            cohort_size: cohort_size.unwrap_or(base.cohort_size),
            max_patients: self.max_patients.or(file.max_patients).unwrap_or(base.max_patients),
            metric: metric.into(),
            weights: match weights {
                WeightArg::Variance => WeightConvention::Variance,
                WeightArg::InverseVariance => WeightConvention::InverseVariance,
            },
            stopping: match stopping {
                StoppingArg::FixedSampleSize => StoppingRule::FixedSampleSize,
                StoppingArg::OneOfSixBelowExcluded => StoppingRule::OneOfSixBelowExcluded,
            },
        };
        tpi.validate().context("TPI parameters")?;

        Ok(RunConfig {
            design,
            cohort_size,
            num_doses: self.num_doses.or(file.num_doses),
            curve: self.curve.clone().or(file.curve),
            tpi,
            seed: self.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            reps: self.reps.or(file.reps).unwrap_or(DEFAULT_REPS),
        })
    }
}

impl RunConfig {
    pub fn require_design(&self) -> Result<DesignId> {
        self.design.context("design: missing (use --design or the `design` key)")
    }

    pub fn curve(&self) -> Result<DoseToxicityCurve> {
        let probs = self.curve.clone().context("curve: missing (use --curve or the `curve` key)")?;
        let curve = DoseToxicityCurve::new(probs).context("curve")?;
        if let Some(n) = self.num_doses {
            if n != curve.num_doses() {
                bail!("num_doses: {n} does not match the curve length {}", curve.num_doses());
            }
        }
        Ok(curve)
    }

    /// Rule-design configuration for `num_doses` levels, `None` for TPI.
    pub fn rule_config(&self, num_doses: usize) -> Result<Option<RuleDesignConfig>> {
        let design = self.require_design()?;
        let config = match design {
            DesignId::Std33 => RuleDesignConfig::standard(num_doses),
            DesignId::Sym2 => RuleDesignConfig::symmetric(2, num_doses),
            DesignId::Sym4 => RuleDesignConfig::symmetric(4, num_doses),
            DesignId::Symmetric => {
                let c = self
                    .cohort_size
                    .context("cohort_size: required for the symmetric design")?;
                RuleDesignConfig::symmetric(c, num_doses)
            }
            DesignId::Hybrid123 => RuleDesignConfig::hybrid(num_doses),
            DesignId::Tpi => return Ok(None),
        };
        Ok(Some(config.context("design")?))
    }

    pub fn design_config(&self, num_doses: usize) -> Result<DesignConfig> {
        Ok(match self.rule_config(num_doses)? {
            Some(rule) => DesignConfig::Rule(rule),
            None => DesignConfig::Tpi {
                config: self.tpi,
                num_doses,
            },
        })
    }
}
