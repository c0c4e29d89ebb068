//! Blockwise EXP3 over the legitimate arms, mixed with uniform exploration.
//!
//! Rounds are grouped into doubling blocks `[2^(m-1), 2^m - 1]`; the
//! exponential-weights learner restarts at each block start with learning
//! rate `sqrt(ln n / (n 2^(m-1)))`. The sampling distribution is the mixture
//! `delta_t / n + (1 - delta_t) * pi_alg`, with `delta_t = t^(-alpha)`.
//!
//! Instead of the reward estimate `R(S) = sum_{t'} [1 - 1{S_t' = S}(1 - R_t')/pi_t'(S)]`
//! the learner stores only the importance-weighted loss
//! `L(S) = sum_{t'} 1{S_t' = S}(1 - R_t')/pi_t'(S)`. Since `R(S) = rounds - L(S)`
//! and the shift is common to all arms, `softmax(eps R) = softmax(-eps L)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exploration schedule `delta_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MadSchedule {
    /// `delta_t = t^(-alpha)` with `alpha` in `[0, 1/2)`.
    PowerLaw { alpha: f64 },
    /// `delta_t = 0`: plain blockwise EXP3.
    Standard,
    /// `delta_t = 1`: uniform sampling.
    Uniform,
}

impl MadSchedule {
    pub fn power_law(alpha: f64) -> Result<Self> {
        let s = MadSchedule::PowerLaw { alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MadSchedule::PowerLaw { alpha } if !(0.0..0.5).contains(&alpha) => Err(Error::config(
                "alpha",
                format!("alpha = {alpha} is outside [0, 0.5)"),
            )),
            _ => Ok(()),
        }
    }

    pub fn delta(&self, t: u64) -> f64 {
        match *self {
            MadSchedule::Standard => 0.0,
            MadSchedule::Uniform => 1.0,
            // via exp2/log2 so powers of two come out exact
            MadSchedule::PowerLaw { alpha } => (-alpha * (t.max(1) as f64).log2()).exp2(),
        }
    }

    /// Short algorithm name used in output files.
    pub fn algo_name(&self) -> &'static str {
        match self {
            MadSchedule::PowerLaw { .. } => "exp3-n-cs",
            MadSchedule::Standard => "standard",
            MadSchedule::Uniform => "uniform",
        }
    }

    /// `alpha` for power laws; NaN for the baselines.
    pub fn alpha(&self) -> f64 {
        match *self {
            MadSchedule::PowerLaw { alpha } => alpha,
            _ => f64::NAN,
        }
    }

    /// `algo` or `algo_alpha`, safe for a directory name.
    pub fn variant_label(&self) -> String {
        match *self {
            MadSchedule::PowerLaw { alpha } => format!("exp3-n-cs_alpha{alpha}"),
            other => other.algo_name().to_string(),
        }
    }
}

/// Doubling block containing a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    /// `m >= 1`.
    pub index: u32,
    /// First round of the block, `2^(m-1)`.
    pub start: u64,
}

impl Block {
    pub fn len(&self) -> u64 {
        self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn block_of(t: u64) -> Result<Block> {
    if t == 0 {
        return Err(Error::Parameter("rounds start at 1".into()));
    }
    let index = u64::BITS - t.leading_zeros();
    Ok(Block {
        index,
        start: 1u64 << (index - 1),
    })
}

/// Learning rate of block `m` for `n_arms` arms (natural log).
pub fn epsilon(block: u32, n_arms: usize) -> Result<f64> {
    if n_arms < 2 {
        return Err(Error::ConditionViolation(format!(
            "learning rate needs at least 2 arms, got {n_arms}"
        )));
    }
    if block == 0 {
        return Err(Error::Parameter("blocks start at 1".into()));
    }
    let n = n_arms as f64;
    Ok((n.ln() / (n * (block as f64 - 1.0).exp2())).sqrt())
}

/// Exponential weights on negated losses, stabilized by subtracting the minimum loss.
pub fn softmax_from_losses(eps: f64, losses: &[f64]) -> Result<Vec<f64>> {
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = losses.iter().map(|l| (-eps * (l - min)).exp()).collect();
    let total: f64 = w.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::Numerical(format!(
            "softmax normalizer {total} from eps {eps}"
        )));
    }
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// Mixes a base distribution with the uniform one at weight `delta`.
pub fn mad_probabilities(alg: &[f64], delta: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Parameter(format!("delta {delta} outside [0, 1]")));
    }
    let floor = delta / alg.len() as f64;
    Ok(alg.iter().map(|p| floor + (1.0 - delta) * p).collect())
}

/// Inverse-CDF draw over the fixed arm order.
pub fn select_arm<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the last partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// EXP3 with mixture exploration, single-owner state for one replication.
#[derive(Debug, Clone)]
pub struct Exp3NCs {
    schedule: MadSchedule,
    max_weight: Option<f64>,
    round: u64,
    block: Block,
    losses: Vec<f64>,
    alg: Vec<f64>,
    mad: Vec<f64>,
    delta: f64,
}

impl Exp3NCs {
    pub fn new(n_arms: usize, schedule: MadSchedule) -> Result<Self> {
        schedule.validate()?;
        epsilon(1, n_arms)?;
        let uniform = vec![1.0 / n_arms as f64; n_arms];
        Ok(Self {
            schedule,
            max_weight: None,
            round: 0,
            block: Block { index: 1, start: 1 },
            losses: vec![0.0; n_arms],
            alg: uniform.clone(),
            mad: uniform,
            delta: 1.0,
        })
    }

    /// Caps importance weights `1/pi` in the loss update. Off by default; the
    /// estimator is only unbiased without it.
    pub fn with_weight_clip(mut self, max_weight: Option<f64>) -> Self {
        self.max_weight = max_weight;
        self
    }

    pub fn n_arms(&self) -> usize {
        self.losses.len()
    }

    pub fn schedule(&self) -> MadSchedule {
        self.schedule
    }

    /// Computes this round's distributions. Rounds must be started in order `1, 2, ...`.
    pub fn begin_round(&mut self, t: u64) -> Result<&[f64]> {
        if t != self.round + 1 {
            return Err(Error::State(format!(
                "round {t} started after round {}",
                self.round
            )));
        }
        let block = block_of(t)?;
        if block != self.block {
            self.losses.iter_mut().for_each(|l| *l = 0.0);
            self.block = block;
        }
        self.round = t;
        let n = self.n_arms();
        self.alg = if t == block.start {
            vec![1.0 / n as f64; n]
        } else {
            softmax_from_losses(epsilon(block.index, n)?, &self.losses)?
        };
        self.delta = self.schedule.delta(t);
        self.mad = mad_probabilities(&self.alg, self.delta)?;
        Ok(&self.mad)
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn block(&self) -> Block {
        self.block
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn alg_probabilities(&self) -> &[f64] {
        &self.alg
    }

    pub fn mad_probabilities(&self) -> &[f64] {
        &self.mad
    }

    pub fn select_arm<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        select_arm(&self.mad, rng)
    }

    /// Adds the importance-weighted loss of the played arm.
    pub fn update(&mut self, selected: usize, reward: f64) -> Result<()> {
        let prob = *self
            .mad
            .get(selected)
            .ok_or_else(|| Error::UnknownArm(format!("index {selected} of {}", self.n_arms())))?;
        if prob <= 0.0 {
            return Err(Error::Parameter(format!(
                "arm {selected} was played with probability {prob}"
            )));
        }
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::Parameter(format!("reward {reward} outside [0, 1]")));
        }
        let mut weight = 1.0 / prob;
        if let Some(cap) = self.max_weight {
            weight = weight.min(cap);
        }
        self.losses[selected] += (1.0 - reward) * weight;
        Ok(())
    }

    /// Importance-weighted losses accumulated in the current block.
    pub fn cumulative_loss(&self) -> &[f64] {
        &self.losses
    }

    /// Reward estimates `R(S) = (rounds played in block) - L(S)`.
    pub fn reward_estimates(&self) -> Vec<f64> {
        let played = (self.round + 1 - self.block.start) as f64;
        self.losses.iter().map(|l| played - l).collect()
    }
}
