//! Regret, estimation error and aggregate summaries.

use crate::environment::GroundTruth;
use crate::error::{Error, Result};

use super::run::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegretMode {
    /// Subtracts the expected reward of the played arm.
    Expected,
    /// Subtracts the realized reward.
    Realized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    /// Best fixed arm over the full horizon of the ground truth.
    Horizon,
    /// Best fixed arm over rounds `1..=t`, recomputed every round.
    PerRound,
}

/// Cumulative regret after each round of a played sequence.
pub fn cumulative_regret(
    selected: &[usize],
    rewards: &[f64],
    truth: &GroundTruth,
    mode: RegretMode,
    comparator: Comparator,
) -> Result<Vec<f64>> {
    if selected.len() != rewards.len() {
        return Err(Error::Parameter(format!(
            "{} arms but {} rewards",
            selected.len(),
            rewards.len()
        )));
    }
    if selected.len() as u64 > truth.horizon() {
        return Err(Error::Parameter(format!(
            "{} rounds exceed the recorded horizon {}",
            selected.len(),
            truth.horizon()
        )));
    }
    let fixed = match comparator {
        Comparator::Horizon => Some(truth.best_fixed_arm(truth.horizon())?),
        Comparator::PerRound => None,
    };
    let mut out = Vec::with_capacity(selected.len());
    let mut own = 0.0;
    for (k, (&arm, &reward)) in selected.iter().zip(rewards).enumerate() {
        let t = k as u64 + 1;
        own += match mode {
            RegretMode::Expected => truth.mean(t, arm)?,
            RegretMode::Realized => reward,
        };
        let best = match fixed {
            Some(a) => a,
            None => truth.best_fixed_arm(t)?,
        };
        out.push(truth.cumulative(t, best)? - own);
    }
    Ok(out)
}

/// Regret of a randomized policy in expectation over its own draws, given
/// the distribution it used each round.
pub fn policy_regret(probabilities: &[Vec<f64>], truth: &GroundTruth) -> Result<f64> {
    let t_end = probabilities.len() as u64;
    if t_end > truth.horizon() {
        return Err(Error::Parameter(
            "more rounds than the recorded horizon".into(),
        ));
    }
    if t_end == 0 {
        return Ok(0.0);
    }
    let best = truth.best_fixed_arm(t_end)?;
    let mut own = 0.0;
    for (k, probs) in probabilities.iter().enumerate() {
        let t = k as u64 + 1;
        for (a, p) in probs.iter().enumerate() {
            own += p * truth.mean(t, a)?;
        }
    }
    Ok(truth.cumulative(t_end, best)? - own)
}

/// Largest absolute error of the final effect estimates over all pairs.
pub fn max_ate_error(record: &RunRecord) -> Result<f64> {
    if !record.all_pairs_tracked {
        return Err(Error::State(
            "maximum error needs every pair; tracking was restricted".into(),
        ));
    }
    Ok(record
        .pairs
        .iter()
        .map(|p| (p.estimate - p.truth).abs())
        .fold(0.0, f64::max))
}

/// `error * sqrt(regret)`. Negative regret, possible against a fixed
/// comparator in a drifting environment, counts as zero.
pub fn pareto_product(regret: f64, error: f64) -> f64 {
    error * regret.max(0.0).sqrt()
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let se = if count > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, se, count }
    }
}

/// Median and quartiles with linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
        }
    }
}

/// Aggregates for one variant across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub replications: usize,
    /// Checkpoint rounds of the trajectories below.
    pub rounds: Vec<u64>,
    /// Mean and SE of cumulative expected regret at each checkpoint round.
    pub regret: Vec<MeanSe>,
    pub final_regret: MeanSe,
    pub max_error: MeanSe,
    pub max_error_quartiles: Quartiles,
    /// Pair with the largest mean final width.
    pub widest_pair: (usize, usize),
    /// Mean width of the widest pair at each checkpoint round.
    pub widest_width: Vec<MeanSe>,
    /// `mean(max error) * sqrt(mean(final regret))`.
    pub pareto: f64,
    /// Replications whose interval for some tracked pair missed the truth
    /// at some round, when monitored.
    pub coverage_failures: Option<usize>,
}
