//! Weighted isotonic regression and MTD rules on monotone fits.
//!
//! [`pava`] is the production solver. [`brute_force_isotonic`] enumerates
//! every partition into consecutive blocks and exists as an independent
//! oracle for it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trial::{DoseGroupRecord, DoseLevel};

/// Absolute tolerance for monotonicity and tie detection.
pub const TOLERANCE: f64 = 1e-12;

/// Largest input accepted by [`brute_force_isotonic`].
pub const BRUTE_FORCE_LIMIT: usize = 12;

/// A nondecreasing weighted least-squares fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit {
    pub input: Vec<f64>,
    pub weights: Vec<f64>,
    pub fitted: Vec<f64>,
}

impl IsotonicFit {
    pub fn len(&self) -> usize {
        self.fitted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fitted.is_empty()
    }

    pub fn weighted_sse(&self) -> f64 {
        sse(&self.input, &self.weights, &self.fitted)
    }
}

fn sse(values: &[f64], weights: &[f64], fitted: &[f64]) -> f64 {
    values
        .iter()
        .zip(weights)
        .zip(fitted)
        .map(|((y, w), z)| w * (y - z) * (y - z))
        .sum()
}

fn validate(values: &[f64], weights: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch {
            values: values.len(),
            weights: weights.len(),
        });
    }
    if let Some((index, &value)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(Error::NonPositiveWeight { index, value });
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::param("values", format!("non-finite value at {index}")));
    }
    Ok(())
}

/// Pool-adjacent-violators for a nondecreasing fit.
pub fn pava(values: &[f64], weights: &[f64]) -> Result<IsotonicFit> {
    validate(values, weights)?;

    struct Block {
        weighted_sum: f64,
        weight: f64,
        len: usize,
    }
    impl Block {
        fn mean(&self) -> f64 {
            self.weighted_sum / self.weight
        }
    }

    let mut blocks: Vec<Block> = Vec::with_capacity(values.len());
    for (&y, &w) in values.iter().zip(weights) {
        let mut block = Block {
            weighted_sum: w * y,
            weight: w,
            len: 1,
        };
        while let Some(prev) = blocks.last() {
            if prev.mean() <= block.mean() {
                break;
            }
            let prev = blocks.pop().expect("checked above");
            block = Block {
                weighted_sum: prev.weighted_sum + block.weighted_sum,
                weight: prev.weight + block.weight,
                len: prev.len + block.len,
            };
        }
        blocks.push(block);
    }

    let fitted = blocks
        .iter()
        .flat_map(|b| std::iter::repeat_n(b.mean(), b.len))
        .collect();
    Ok(IsotonicFit {
        input: values.to_vec(),
        weights: weights.to_vec(),
        fitted,
    })
}

/// Exhaustive search over consecutive-block partitions.
pub fn brute_force_isotonic(values: &[f64], weights: &[f64]) -> Result<IsotonicFit> {
    validate(values, weights)?;
    let n = values.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            len: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    // Bit i set means a block boundary between positions i and i + 1.
    for cuts in 0u32..(1 << (n - 1)) {
        let mut fitted = Vec::with_capacity(n);
        let mut start = 0;
        let mut prev_mean = f64::NEG_INFINITY;
        let mut monotone = true;
        for end in 1..=n {
            if end < n && cuts & (1 << (end - 1)) == 0 {
                continue;
            }
            let w: f64 = weights[start..end].iter().sum();
            let wy: f64 = values[start..end]
                .iter()
                .zip(&weights[start..end])
                .map(|(y, w)| y * w)
                .sum();
            let mean = wy / w;
            if mean < prev_mean - TOLERANCE {
                monotone = false;
                break;
            }
            fitted.extend(std::iter::repeat_n(mean, end - start));
            prev_mean = mean;
            start = end;
        }
        if !monotone {
            continue;
        }
        let cost = sse(values, weights, &fitted);
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, fitted));
        }
    }

    let (_, fitted) = best.expect("the single-block partition is always monotone");
    Ok(IsotonicFit {
        input: values.to_vec(),
        weights: weights.to_vec(),
        fitted,
    })
}

/// Empirical rates `t_i / n_i` weighted by `n_i` over treated doses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRates {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    /// Original dose level of each entry.
    pub doses: Vec<DoseLevel>,
}

pub fn empirical_rates(groups: &[DoseGroupRecord]) -> EmpiricalRates {
    let mut rates = EmpiricalRates::default();
    for (i, g) in groups.iter().enumerate() {
        if let Some(rate) = g.rate() {
            rates.values.push(rate);
            rates.weights.push(f64::from(g.patients));
            rates.doses.push(DoseLevel::from_index(i));
        }
    }
    rates
}

/// Largest dose whose fitted rate does not exceed `p_target`.
pub fn mtd_largest_below(fit: &IsotonicFit, p_target: f64, doses: &[DoseLevel]) -> Option<DoseLevel> {
    fit.fitted
        .iter()
        .zip(doses)
        .filter(|(z, _)| **z <= p_target + TOLERANCE)
        .map(|(_, &d)| d)
        .max()
}

/// Dose whose fitted rate is closest to `p_target`. Among ties the highest
/// dose wins when the tied fitted values average below the target, else the
/// lowest.
pub fn mtd_closest(fit: &IsotonicFit, p_target: f64, doses: &[DoseLevel]) -> Option<DoseLevel> {
    let best = fit
        .fitted
        .iter()
        .map(|z| (z - p_target).abs())
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let ties: Vec<(f64, DoseLevel)> = fit
        .fitted
        .iter()
        .zip(doses)
        .filter(|(z, _)| (*z - p_target).abs() <= best + TOLERANCE)
        .map(|(&z, &d)| (z, d))
        .collect();
    let tie_mean = ties.iter().map(|(z, _)| z).sum::<f64>() / ties.len() as f64;
    if tie_mean < p_target - TOLERANCE {
        ties.iter().map(|&(_, d)| d).max()
    } else {
        ties.iter().map(|&(_, d)| d).min()
    }
}
