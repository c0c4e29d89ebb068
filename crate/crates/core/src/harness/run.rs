//! One replication of one policy variant.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::environment::{Environment, GroundTruth};
use crate::error::{Error, Result};
use crate::inference::{all_pairs, ArmAccumulators, CsParams};
use crate::policy::{Exp3NCs, MadSchedule};

use super::config::{Instance, RunConfig};
use super::metrics::{cumulative_regret, Comparator, RegretMode};

/// Independent random streams for one replication. Every variant of a run
/// sees the same streams for the same `rep`, so environments match across
/// variants.
#[derive(Debug, Clone)]
pub struct RepStreams {
    pub environment_seed: u64,
    pub policy: ChaCha8Rng,
    pub witness: ChaCha8Rng,
    pub reward: ChaCha8Rng,
}

impl RepStreams {
    pub fn new(master_seed: u64, rep: u64) -> Self {
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(rep.wrapping_mul(4).wrapping_add(k));
            rng
        };
        Self {
            environment_seed: stream(0).next_u64(),
            policy: stream(1),
            witness: stream(2),
            reward: stream(3),
        }
    }
}

/// One row of `rounds.csv` minus the run-level columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRow {
    pub t: u64,
    pub block: u32,
    pub arm: usize,
    pub delta: f64,
    pub propensity: f64,
    pub reward: f64,
    pub expected_reward: f64,
    pub best_expected_reward: f64,
    pub cum_regret_expected: f64,
    pub cum_regret_realized: f64,
}

/// Per-arm inference sums and cumulative expected rewards after round `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: u64,
    pub weighted_reward: Vec<f64>,
    pub inverse_propensity: Vec<f64>,
    pub cumulative_mean: Vec<f64>,
}

impl Checkpoint {
    pub fn estimate(&self, i: usize, j: usize) -> f64 {
        (self.weighted_reward[i] - self.weighted_reward[j]) / self.t as f64
    }

    pub fn true_ate(&self, i: usize, j: usize) -> f64 {
        (self.cumulative_mean[i] - self.cumulative_mean[j]) / self.t as f64
    }

    pub fn width(&self, i: usize, j: usize, params: &CsParams) -> f64 {
        crate::inference::cs_width(
            self.inverse_propensity[i] + self.inverse_propensity[j],
            self.t,
            params,
        )
    }
}

/// Final state of one tracked pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOutcome {
    pub i: usize,
    pub j: usize,
    pub estimate: f64,
    pub truth: f64,
    pub width: f64,
    /// First round whose interval missed the truth, when monitored.
    pub first_miss: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundProbabilities {
    pub alg: Vec<f64>,
    pub mad: Vec<f64>,
}

/// Everything one replication produces.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rep: u64,
    pub schedule: MadSchedule,
    pub n_arms: usize,
    pub horizon: u64,
    /// Best fixed arm over the whole horizon.
    pub comparator: usize,
    pub rounds: Vec<RoundRow>,
    pub checkpoints: Vec<Checkpoint>,
    pub pairs: Vec<PairOutcome>,
    pub all_pairs_tracked: bool,
    pub probabilities: Option<Vec<RoundProbabilities>>,
}

impl RunRecord {
    pub fn final_regret(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cum_regret_expected)
    }

    pub fn final_regret_realized(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cum_regret_realized)
    }
}

/// Tracked pairs from the logging config, validated against `n_arms`.
pub fn tracked_pairs(config: &RunConfig, n_arms: usize) -> Result<Vec<(usize, usize)>> {
    match &config.logging.tracked_pairs {
        None => Ok(all_pairs(n_arms)),
        Some(list) => list
            .iter()
            .map(|&[i, j]| {
                if i >= n_arms || j >= n_arms || i == j {
                    Err(Error::config(
                        "logging.tracked_pairs",
                        format!("pair ({i}, {j}) is not a pair of distinct arms below {n_arms}"),
                    ))
                } else {
                    Ok((i, j))
                }
            })
            .collect(),
    }
}

pub fn run_replication(
    config: &RunConfig,
    instance: &Instance,
    schedule: MadSchedule,
    rep: u64,
) -> Result<RunRecord> {
    let wrap = |round: u64| {
        move |e: Error| Error::Round {
            rep,
            round,
            source: Box::new(e),
        }
    };
    let horizon = config.horizon;
    let n = instance.n_arms();
    let pairs = tracked_pairs(config, n)?;
    let stride = config.cs_stride();
    let mut streams = RepStreams::new(config.master_seed, rep);

    let mut env = Environment::new(
        &instance.environment,
        &instance.index,
        &instance.network,
        streams.environment_seed,
    )?;
    env.materialize(horizon);
    let truth = GroundTruth::record(&env, horizon)?;
    let comparator = truth.best_fixed_arm(horizon)?;

    let mut policy = Exp3NCs::new(n, schedule)?.with_weight_clip(config.weight_clip);
    let mut acc = ArmAccumulators::new(n);
    let mut selected = Vec::with_capacity(horizon as usize);
    let mut rewards = Vec::with_capacity(horizon as usize);
    let mut rounds = Vec::with_capacity(horizon as usize);
    let mut checkpoints = Vec::new();
    let mut probabilities = config.logging.log_probabilities.then(Vec::new);
    let mut first_miss: Vec<Option<u64>> = vec![None; pairs.len()];

    for t in 1..=horizon {
        let mad = policy.begin_round(t).map_err(wrap(t))?.to_vec();
        let arm = policy.select_arm(&mut streams.policy);
        let real = instance
            .index
            .sample_witness(arm, &mut streams.witness)
            .map_err(wrap(t))?;
        let reward = env
            .realize_reward(t, arm, real, &mut streams.reward)
            .map_err(wrap(t))?;
        acc.observe(arm, reward, &mad).map_err(wrap(t))?;
        policy.update(arm, reward).map_err(wrap(t))?;

        if let Some(log) = probabilities.as_mut() {
            log.push(RoundProbabilities {
                alg: policy.alg_probabilities().to_vec(),
                mad: mad.clone(),
            });
        }
        if config.logging.monitor_coverage {
            for (k, &(i, j)) in pairs.iter().enumerate() {
                if first_miss[k].is_some() {
                    continue;
                }
                let interval = acc.pair(i, j)?.cs_interval(&config.cs)?;
                if !interval.covers(truth.true_ate(t, i, j)?) {
                    first_miss[k] = Some(t);
                }
            }
        }
        if t % stride == 0 || t == horizon {
            checkpoints.push(Checkpoint {
                t,
                weighted_reward: acc.weighted_reward().to_vec(),
                inverse_propensity: acc.inverse_propensity().to_vec(),
                cumulative_mean: (0..n)
                    .map(|a| truth.cumulative(t, a))
                    .collect::<Result<_>>()?,
            });
        }
        rounds.push(RoundRow {
            t,
            block: policy.block().index,
            arm,
            delta: policy.delta(),
            propensity: mad[arm],
            reward,
            expected_reward: env.expected_reward(t, arm)?,
            best_expected_reward: 0.0,
            cum_regret_expected: 0.0,
            cum_regret_realized: 0.0,
        });
        selected.push(arm);
        rewards.push(reward);
    }

    let comparison = if config.logging.per_round_comparator {
        Comparator::PerRound
    } else {
        Comparator::Horizon
    };
    let expected = cumulative_regret(
        &selected,
        &rewards,
        &truth,
        RegretMode::Expected,
        comparison,
    )?;
    let realized = cumulative_regret(
        &selected,
        &rewards,
        &truth,
        RegretMode::Realized,
        comparison,
    )?;
    for (k, row) in rounds.iter_mut().enumerate() {
        let best = match comparison {
            Comparator::Horizon => comparator,
            Comparator::PerRound => truth.best_fixed_arm(row.t)?,
        };
        row.best_expected_reward = env.expected_reward(row.t, best)?;
        row.cum_regret_expected = expected[k];
        row.cum_regret_realized = realized[k];
    }

    let pairs = pairs
        .iter()
        .zip(first_miss)
        .map(|(&(i, j), miss)| {
            let state = acc.pair(i, j)?;
            Ok(PairOutcome {
                i,
                j,
                estimate: state.ate_estimate()?,
                truth: truth.true_ate(horizon, i, j)?,
                width: state.cs_interval(&config.cs)?.width,
                first_miss: miss,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RunRecord {
        rep,
        schedule,
        n_arms: n,
        horizon,
        comparator,
        rounds,
        checkpoints,
        all_pairs_tracked: config.logging.tracked_pairs.is_none(),
        pairs,
        probabilities,
    })
}
