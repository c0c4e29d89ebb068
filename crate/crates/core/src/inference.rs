//! Inverse-propensity ATE estimates and asymptotic confidence sequences.
//!
//! For a pair of arms `(i, j)` the per-round estimate is
//! `1{S_t = i} R_t / pi_t(i) - 1{S_t = j} R_t / pi_t(j)`; its running mean
//! estimates the time-averaged effect. The variance proxy
//! `V_t = sum_{t'} (1/pi_t'(i) + 1/pi_t'(j))` drives the width
//!
//! ```text
//! C_t = sqrt( 2 (V_t eta^2 + 1) / (t^2 eta^2) * ln( sqrt(V_t eta^2 + 1) / delta ) )
//! ```
//!
//! Both sums split into per-arm parts, so [`ArmAccumulators`] tracks every
//! pair in `O(n)` memory and hands out a [`PairInferenceState`] on request.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsParams {
    pub eta: f64,
    pub tilde_delta: f64,
}

impl Default for CsParams {
    fn default() -> Self {
        Self {
            eta: 1.0,
            tilde_delta: 0.05,
        }
    }
}

impl CsParams {
    pub fn new(eta: f64, tilde_delta: f64) -> Result<Self> {
        let p = Self { eta, tilde_delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config(
                "cs.eta",
                format!("eta = {} must be positive", self.eta),
            ));
        }
        if !(self.tilde_delta > 0.0 && self.tilde_delta < 1.0) {
            return Err(Error::config(
                "cs.tilde_delta",
                format!("tilde_delta = {} is outside (0, 1)", self.tilde_delta),
            ));
        }
        Ok(())
    }
}

/// One element of the confidence sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsInterval {
    pub center: f64,
    pub width: f64,
}

impl CsInterval {
    pub fn covers(&self, value: f64) -> bool {
        (self.center - value).abs() <= self.width
    }
}

fn propensity(probs: &[f64], arm: usize) -> Result<f64> {
    match probs.get(arm) {
        Some(&p) if p > 0.0 => Ok(p),
        Some(&p) => Err(Error::Parameter(format!("arm {arm} has propensity {p}"))),
        None => Err(Error::UnknownArm(format!("index {arm} of {}", probs.len()))),
    }
}

/// Single-round IPW effect estimate for `(i, j)`.
pub fn ipw_increment(
    selected: usize,
    reward: f64,
    probs: &[f64],
    pair: (usize, usize),
) -> Result<f64> {
    let (i, j) = pair;
    let pi = propensity(probs, i)?;
    let pj = propensity(probs, j)?;
    let hit_i = if selected == i { reward / pi } else { 0.0 };
    let hit_j = if selected == j { reward / pj } else { 0.0 };
    Ok(hit_i - hit_j)
}

/// Width for `rounds` rounds with variance proxy `variance_proxy`.
pub fn cs_width(variance_proxy: f64, rounds: u64, params: &CsParams) -> f64 {
    let eta2 = params.eta * params.eta;
    let scaled = variance_proxy * eta2 + 1.0;
    let t = rounds as f64;
    (2.0 * scaled / (t * t * eta2) * (scaled.sqrt() / params.tilde_delta).ln()).sqrt()
}

/// Running IPW sum and variance proxy for one ordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairInferenceState {
    pub sum_tau_hat: f64,
    pub variance_proxy: f64,
    pub rounds: u64,
}

impl PairInferenceState {
    pub fn update(&mut self, increment: f64, probs: &[f64], pair: (usize, usize)) -> Result<()> {
        let pi = propensity(probs, pair.0)?;
        let pj = propensity(probs, pair.1)?;
        self.sum_tau_hat += increment;
        self.variance_proxy += 1.0 / pi + 1.0 / pj;
        self.rounds += 1;
        Ok(())
    }

    /// Computes the increment from the round's outcome and folds it in.
    pub fn observe(
        &mut self,
        selected: usize,
        reward: f64,
        probs: &[f64],
        pair: (usize, usize),
    ) -> Result<()> {
        let inc = ipw_increment(selected, reward, probs, pair)?;
        self.update(inc, probs, pair)
    }

    /// The running mean of the per-round estimates.
    pub fn ate_estimate(&self) -> Result<f64> {
        if self.rounds == 0 {
            return Err(Error::State("no rounds observed".into()));
        }
        Ok(self.sum_tau_hat / self.rounds as f64)
    }

    pub fn cs_interval(&self, params: &CsParams) -> Result<CsInterval> {
        Ok(CsInterval {
            center: self.ate_estimate()?,
            width: cs_width(self.variance_proxy, self.rounds, params),
        })
    }
}

/// Per-arm sums from which the state of any pair can be assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmAccumulators {
    // sum over rounds of 1{S_t = a} R_t / pi_t(a)
    weighted_reward: Vec<f64>,
    // sum over rounds of 1 / pi_t(a)
    inverse_propensity: Vec<f64>,
    rounds: u64,
}

impl ArmAccumulators {
    pub fn new(n_arms: usize) -> Self {
        Self {
            weighted_reward: vec![0.0; n_arms],
            inverse_propensity: vec![0.0; n_arms],
            rounds: 0,
        }
    }

    pub fn n_arms(&self) -> usize {
        self.weighted_reward.len()
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// An arm with propensity exactly zero (possible when `delta_t = 0` and the
    /// softmax underflows) gets an infinite variance proxy, i.e. an unbounded
    /// interval, instead of an error.
    pub fn observe(&mut self, selected: usize, reward: f64, probs: &[f64]) -> Result<()> {
        if probs.len() != self.n_arms() {
            return Err(Error::Parameter(format!(
                "{} propensities for {} arms",
                probs.len(),
                self.n_arms()
            )));
        }
        let p_sel = propensity(probs, selected)?;
        for (a, &p) in probs.iter().enumerate() {
            if p.is_nan() || p < 0.0 {
                return Err(Error::Parameter(format!("arm {a} has propensity {p}")));
            }
            self.inverse_propensity[a] += 1.0 / p;
        }
        self.weighted_reward[selected] += reward / p_sel;
        self.rounds += 1;
        Ok(())
    }

    pub fn weighted_reward(&self) -> &[f64] {
        &self.weighted_reward
    }

    pub fn inverse_propensity(&self) -> &[f64] {
        &self.inverse_propensity
    }

    pub fn pair(&self, i: usize, j: usize) -> Result<PairInferenceState> {
        let n = self.n_arms();
        if i >= n || j >= n {
            return Err(Error::UnknownArm(format!("pair ({i}, {j}) with {n} arms")));
        }
        Ok(PairInferenceState {
            sum_tau_hat: if i == j {
                0.0
            } else {
                self.weighted_reward[i] - self.weighted_reward[j]
            },
            variance_proxy: self.inverse_propensity[i] + self.inverse_propensity[j],
            rounds: self.rounds,
        })
    }
}

/// All unordered pairs `i < j` of `n` arms, lexicographic.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::policy::select_arm;

    #[test]
    fn increments() {
        let probs = [0.25, 0.2, 0.3, 0.25];
        assert_eq!(ipw_increment(2, 0.9, &probs, (0, 1)).unwrap(), 0.0);
        assert!((ipw_increment(0, 0.6, &probs, (0, 1)).unwrap() - 2.4).abs() < 1e-15);
        assert!((ipw_increment(1, 0.4, &probs, (0, 1)).unwrap() + 2.0).abs() < 1e-15);
        assert_eq!(ipw_increment(0, 0.6, &probs, (0, 0)).unwrap(), 0.0);
    }

    #[test]
    fn zero_propensity_rejected() {
        let probs = [0.0, 1.0];
        assert!(matches!(
            ipw_increment(1, 0.5, &probs, (0, 1)),
            Err(Error::Parameter(_))
        ));
        let mut s = PairInferenceState::default();
        assert!(s.update(0.0, &probs, (0, 1)).is_err());
        let mut acc = ArmAccumulators::new(2);
        assert!(acc.observe(0, 0.5, &probs).is_err());
        assert!(acc.observe(1, 0.5, &[-0.1, 1.1]).is_err());
        acc.observe(1, 0.5, &probs).unwrap();
        assert_eq!(acc.inverse_propensity()[0], f64::INFINITY);
        assert_eq!(
            acc.pair(0, 1)
                .unwrap()
                .cs_interval(&CsParams::default())
                .unwrap()
                .width,
            f64::INFINITY
        );
    }

    #[test]
    fn pair_updates() {
        let mut s = PairInferenceState::default();
        s.update(2.4, &[0.25, 0.25, 0.5], (0, 1)).unwrap();
        assert_eq!((s.sum_tau_hat, s.variance_proxy, s.rounds), (2.4, 8.0, 1));
        assert_eq!(s.ate_estimate().unwrap(), 2.4);

        let mut s = PairInferenceState::default();
        s.update(0.0, &[0.5, 0.5], (0, 1)).unwrap();
        assert_eq!(s.variance_proxy, 4.0);

        let n_arms = 6;
        let probs = vec![1.0 / n_arms as f64; n_arms];
        let mut s = PairInferenceState::default();
        for _ in 0..1000 {
            s.update(0.0, &probs, (2, 5)).unwrap();
        }
        assert!((s.variance_proxy - 2.0 * 1000.0 * n_arms as f64).abs() < 1e-9);
    }

    #[test]
    fn width_reference_value() {
        let s = PairInferenceState {
            sum_tau_hat: 0.0,
            variance_proxy: 4.0,
            rounds: 1,
        };
        let w = s.cs_interval(&CsParams::default()).unwrap().width;
        // sqrt(10 ln(sqrt(5) / 0.05)) = 6.164780
        assert!((w - 6.164_78).abs() < 1e-5);
        assert!((w - (10.0 * (5f64.sqrt() / 0.05).ln()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn width_decreases_in_delta() {
        let s = PairInferenceState {
            sum_tau_hat: 1.0,
            variance_proxy: 400.0,
            rounds: 50,
        };
        let narrow = s
            .cs_interval(&CsParams::new(1.0, 0.10).unwrap())
            .unwrap()
            .width;
        let wide = s
            .cs_interval(&CsParams::new(1.0, 0.01).unwrap())
            .unwrap()
            .width;
        assert!(wide > narrow);
    }

    #[test]
    fn empty_state_errors() {
        let s = PairInferenceState::default();
        assert!(matches!(s.ate_estimate(), Err(Error::State(_))));
        assert!(matches!(
            s.cs_interval(&CsParams::default()),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn params_validated() {
        assert!(CsParams::new(0.0, 0.05).is_err());
        assert!(CsParams::new(1.0, 0.0).is_err());
        assert!(CsParams::new(1.0, 1.0).is_err());
        assert!(CsParams::new(0.3, 0.5).is_ok());
    }

    /// Exact expectation over the arm draw equals the per-round effect.
    #[test]
    fn increment_is_unbiased_exactly() {
        let means = [0.7, 0.15, 0.4];
        let probs = [0.2, 0.5, 0.3];
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            let expectation: f64 = (0..3)
                .map(|s| probs[s] * ipw_increment(s, means[s], &probs, (i, j)).unwrap())
                .sum();
            assert!((expectation - (means[i] - means[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn self_pair_is_zero() {
        let mut acc = ArmAccumulators::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let probs = [0.5, 0.3, 0.2];
            let a = select_arm(&probs, &mut rng);
            acc.observe(a, rng.random(), &probs).unwrap();
            assert_eq!(acc.pair(1, 1).unwrap().ate_estimate().unwrap(), 0.0);
        }
    }

    proptest! {
        #[test]
        fn accumulators_match_pairwise_updates(seed in any::<u64>(), n in 2usize..7, rounds in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut acc = ArmAccumulators::new(n);
            let pairs = all_pairs(n);
            let mut direct = vec![PairInferenceState::default(); pairs.len()];
            let mut reversed = vec![PairInferenceState::default(); pairs.len()];
            for _ in 0..rounds {
                let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
                let z: f64 = raw.iter().sum();
                let probs: Vec<f64> = raw.iter().map(|x| x / z).collect();
                let a = select_arm(&probs, &mut rng);
                let r: f64 = rng.random();
                acc.observe(a, r, &probs).unwrap();
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    direct[k].observe(a, r, &probs, (i, j)).unwrap();
                    reversed[k].observe(a, r, &probs, (j, i)).unwrap();
                }
            }
            let params = CsParams::default();
            for (k, &(i, j)) in pairs.iter().enumerate() {
                let from_acc = acc.pair(i, j).unwrap();
                let scale = 1.0 + from_acc.variance_proxy;
                prop_assert!((from_acc.sum_tau_hat - direct[k].sum_tau_hat).abs() < 1e-12 * scale);
                prop_assert!((from_acc.variance_proxy - direct[k].variance_proxy).abs() < 1e-12 * scale);
                // antisymmetry
                prop_assert_eq!(reversed[k].sum_tau_hat, -direct[k].sum_tau_hat);
                prop_assert_eq!(reversed[k].variance_proxy, direct[k].variance_proxy);
                let w1 = direct[k].cs_interval(&params).unwrap().width;
                let w2 = reversed[k].cs_interval(&params).unwrap().width;
                prop_assert_eq!(w1, w2);
                // each summand is at least 2
                prop_assert!(direct[k].variance_proxy >= 2.0 * rounds as f64);
            }
        }
    }
}
