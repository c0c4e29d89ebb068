//! Design-based reward instances.
//!
//! Three generators are available:
//!
//! * `BernoulliDrift` works directly at the exposure level. Each arm's mean is
//!   drawn from `U[0, 1]`, independently across arms, and redrawn every
//!   `resample_period` rounds; the realized reward is a Bernoulli draw.
//! * `UnitLevelFixedMeans` specifies a bounded outcome for every unit and
//!   real assignment. An exposure arm's expected reward is the average unit
//!   outcome over its witness pool, and the realized reward is the average
//!   unit outcome under the sampled witness.
//! * `AdversarialTrace` replays a fixed table of per-round arm means
//!   (cycled when the run outlives it) with Bernoulli realizations. A
//!   one-row trace is a stationary Bernoulli bandit.
//!
//! Expected rewards are pure functions of `(spec, seed, t, arm)`, so ground
//! truth can be recomputed at any time without replaying the run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::{Label, LegitimateArmIndex};
use crate::topology::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    BernoulliDrift {
        resample_period: u64,
        /// Fixes the instance across replications. When absent each
        /// replication draws its own instance from the run seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Unit outcome `f_i(A) = (1 - w_i) * own[i][a_i] + w_i * (share of i's neighbours not on arm 0)`.
    UnitLevelFixedMeans {
        /// `n_units` rows of `K` means.
        own: Vec<Vec<f64>>,
        /// Spillover weight `w_i` per unit; empty means no spillover.
        #[serde(default)]
        spillover: Vec<f64>,
    },
    AdversarialTrace {
        /// One row per round, one column per legitimate arm (index order).
        means: Vec<Vec<f64>>,
    },
}

impl EnvironmentSpec {
    pub fn drift(resample_period: u64) -> Self {
        EnvironmentSpec::BernoulliDrift {
            resample_period,
            seed: None,
        }
    }

    pub fn stationary(means: Vec<f64>) -> Self {
        EnvironmentSpec::AdversarialTrace { means: vec![means] }
    }

    /// Seed pinned in the spec itself, if any.
    pub fn fixed_seed(&self) -> Option<u64> {
        match self {
            EnvironmentSpec::BernoulliDrift { seed, .. } => *seed,
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
struct UnitOutcomes {
    own: Vec<Vec<f64>>,
    spillover: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
}

impl UnitOutcomes {
    fn average(&self, real_arm: &[Label]) -> f64 {
        let n = self.own.len();
        let total: f64 = (0..n)
            .map(|i| {
                let own = self.own[i][real_arm[i] as usize];
                let w = self.spillover[i];
                let ns = &self.neighbors[i];
                let share = if ns.is_empty() {
                    0.0
                } else {
                    ns.iter().filter(|&&j| real_arm[j - 1] != 0).count() as f64 / ns.len() as f64
                };
                (1.0 - w) * own + w * share
            })
            .sum();
        total / n as f64
    }
}

#[derive(Debug, Clone)]
enum Source {
    Drift {
        period: u64,
        seed: u64,
        blocks: Vec<Vec<f64>>,
    },
    Fixed {
        outcomes: UnitOutcomes,
        means: Vec<f64>,
    },
    Trace {
        rows: Vec<Vec<f64>>,
    },
}

/// A reward instance over the arms of a [`LegitimateArmIndex`].
#[derive(Debug, Clone)]
pub struct Environment {
    n_arms: usize,
    source: Source,
}

impl Environment {
    /// `seed` is ignored when the spec pins its own.
    pub fn new(
        spec: &EnvironmentSpec,
        index: &LegitimateArmIndex,
        network: &Network,
        seed: u64,
    ) -> Result<Self> {
        let n_arms = index.len();
        let source = match spec {
            EnvironmentSpec::BernoulliDrift {
                resample_period,
                seed: pinned,
            } => {
                if *resample_period == 0 {
                    return Err(Error::config(
                        "environment.resample_period",
                        "must be at least 1",
                    ));
                }
                Source::Drift {
                    period: *resample_period,
                    seed: pinned.unwrap_or(seed),
                    blocks: Vec::new(),
                }
            }
            EnvironmentSpec::UnitLevelFixedMeans { own, spillover } => {
                let n = network.n_units();
                let k = index.mapping().arm_count() as usize;
                if own.len() != n || own.iter().any(|row| row.len() != k) {
                    return Err(Error::config(
                        "environment.own",
                        format!("expected {n} rows of {k} means"),
                    ));
                }
                let spillover = if spillover.is_empty() {
                    vec![0.0; n]
                } else if spillover.len() == n {
                    spillover.clone()
                } else {
                    return Err(Error::config(
                        "environment.spillover",
                        format!("expected {n} weights"),
                    ));
                };
                if own
                    .iter()
                    .flatten()
                    .chain(&spillover)
                    .any(|v| !(0.0..=1.0).contains(v))
                {
                    return Err(Error::config(
                        "environment.own",
                        "means and spillover weights must lie in [0, 1]",
                    ));
                }
                let outcomes = UnitOutcomes {
                    own: own.clone(),
                    spillover,
                    neighbors: (1..=n)
                        .map(|u| network.neighbors(u).map(<[usize]>::to_vec))
                        .collect::<Result<_>>()?,
                };
                let means = (0..n_arms)
                    .map(|a| {
                        let pool = index.witness_pool(a)?;
                        let sum: f64 = pool.iter().map(|w| outcomes.average(w)).sum();
                        Ok(sum / pool.len() as f64)
                    })
                    .collect::<Result<_>>()?;
                Source::Fixed { outcomes, means }
            }
            EnvironmentSpec::AdversarialTrace { means } => {
                if means.is_empty() || means.iter().any(|row| row.len() != n_arms) {
                    return Err(Error::config(
                        "environment.means",
                        format!("expected at least one row of {n_arms} means"),
                    ));
                }
                if means.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::config(
                        "environment.means",
                        "means must lie in [0, 1]",
                    ));
                }
                Source::Trace {
                    rows: means.clone(),
                }
            }
        };
        Ok(Self { n_arms, source })
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    /// Precomputes drift blocks so that lookups up to `horizon` are table reads.
    pub fn materialize(&mut self, horizon: u64) {
        if let Source::Drift {
            period,
            seed,
            blocks,
        } = &mut self.source
        {
            let needed = horizon.div_ceil(*period) as usize;
            while blocks.len() < needed {
                let b = blocks.len() as u64;
                blocks.push(drift_block(*seed, b, self.n_arms));
            }
        }
    }

    /// Expected reward of arm `arm` at round `t >= 1`.
    pub fn expected_reward(&self, t: u64, arm: usize) -> Result<f64> {
        if arm >= self.n_arms {
            return Err(Error::UnknownArm(format!("index {arm} of {}", self.n_arms)));
        }
        if t == 0 {
            return Err(Error::Parameter("rounds start at 1".into()));
        }
        let mean = match &self.source {
            Source::Drift {
                period,
                seed,
                blocks,
            } => {
                let b = (t - 1) / period;
                match blocks.get(b as usize) {
                    Some(row) => row[arm],
                    None => drift_block(*seed, b, self.n_arms)[arm],
                }
            }
            Source::Fixed { means, .. } => means[arm],
            Source::Trace { rows } => rows[((t - 1) % rows.len() as u64) as usize][arm],
        };
        debug_assert!((0.0..=1.0).contains(&mean));
        Ok(mean)
    }

    /// Realized reward for arm `arm` played through `real_arm` at round `t`.
    pub fn realize_reward<R: Rng + ?Sized>(
        &self,
        t: u64,
        arm: usize,
        real_arm: &[Label],
        rng: &mut R,
    ) -> Result<f64> {
        let reward = match &self.source {
            Source::Fixed { outcomes, .. } => {
                if arm >= self.n_arms {
                    return Err(Error::UnknownArm(format!("index {arm} of {}", self.n_arms)));
                }
                if real_arm.len() != outcomes.own.len() {
                    return Err(Error::Parameter(format!(
                        "assignment has {} entries, expected {}",
                        real_arm.len(),
                        outcomes.own.len()
                    )));
                }
                outcomes.average(real_arm)
            }
            _ => {
                let p = self.expected_reward(t, arm)?;
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
        };
        debug_assert!((0.0..=1.0).contains(&reward));
        Ok(reward)
    }
}

fn drift_block(seed: u64, block: u64, n_arms: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    (0..n_arms).map(|_| rng.random::<f64>()).collect()
}

/// Per-arm prefix sums of expected rewards over rounds `1..=horizon`.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    n_arms: usize,
    horizon: u64,
    // row t (0 = before round 1) holds the cumulative sums through round t
    prefix: Vec<f64>,
}

impl GroundTruth {
    pub fn record(env: &Environment, horizon: u64) -> Result<Self> {
        let n = env.n_arms();
        let mut prefix = vec![0.0; (horizon as usize + 1) * n];
        for t in 1..=horizon {
            let (done, rest) = prefix.split_at_mut(t as usize * n);
            let prev = &done[(t as usize - 1) * n..];
            for a in 0..n {
                rest[a] = prev[a] + env.expected_reward(t, a)?;
            }
        }
        Ok(Self {
            n_arms: n,
            horizon,
            prefix,
        })
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    /// `sum_{t' <= t} Y_t'(arm)`.
    pub fn cumulative(&self, t: u64, arm: usize) -> Result<f64> {
        self.check(t, arm)?;
        Ok(self.prefix[t as usize * self.n_arms + arm])
    }

    /// `Y_t(arm)`, recovered from the table.
    pub fn mean(&self, t: u64, arm: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::Parameter("rounds start at 1".into()));
        }
        Ok(self.cumulative(t, arm)? - self.cumulative(t - 1, arm)?)
    }

    /// Time-averaged effect of `i` over `j` through round `t`.
    pub fn true_ate(&self, t: u64, i: usize, j: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::Parameter("rounds start at 1".into()));
        }
        if i == j {
            self.check(t, i)?;
            return Ok(0.0);
        }
        Ok((self.cumulative(t, i)? - self.cumulative(t, j)?) / t as f64)
    }

    /// Best fixed arm over rounds `1..=t`; ties go to the lowest index.
    pub fn best_fixed_arm(&self, t: u64) -> Result<usize> {
        let mut best = 0;
        let mut best_sum = self.cumulative(t, 0)?;
        for a in 1..self.n_arms {
            let s = self.cumulative(t, a)?;
            if s > best_sum {
                best = a;
                best_sum = s;
            }
        }
        Ok(best)
    }

    fn check(&self, t: u64, arm: usize) -> Result<()> {
        if arm >= self.n_arms {
            return Err(Error::UnknownArm(format!("index {arm} of {}", self.n_arms)));
        }
        if t > self.horizon {
            return Err(Error::State(format!(
                "ground truth retained through round {}, asked for {t}",
                self.horizon
            )));
        }
        Ok(())
    }
}
