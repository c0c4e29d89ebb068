//! Exposure mappings and the legitimate exposure super-arm set.
//!
//! An exposure mapping compresses a unit's view of the joint assignment
//! (its own arm, its neighbours' arms) into a small label. The learner acts on
//! *exposure super arms*: one label per unit, constant within each cluster,
//! and realizable by at least one real assignment. Realization is a two-stage
//! draw: pick an exposure super arm, then pick a compatible real assignment
//! uniformly from its witness pool.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{Clustering, Network};

/// Arm or exposure label. Real arms live in `0..K`, exposure labels in `0..d_s`.
pub type Label = u32;

/// Upper bound on `d_s^C`, the number of candidate cluster profiles.
pub const MAX_PROFILES: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExposureKind {
    /// Each unit's exposure is its own arm.
    PerUnitArm,
    /// Every unit is exposed to the arm of unit 1; all labels move together.
    GlobalSwitchback,
    /// Each unit is exposed to the arm of the lowest-numbered unit of its cluster.
    /// Needs no knowledge of the network.
    ClusterIndexArm,
    /// Binary exposure: 1 iff the fraction of neighbours on arm 1 lies in
    /// `[0, numerator / denominator)`. Requires `K = 2`.
    NeighborFractionThreshold { numerator: u64, denominator: u64 },
}

impl ExposureKind {
    pub fn half_threshold() -> Self {
        ExposureKind::NeighborFractionThreshold {
            numerator: 1,
            denominator: 2,
        }
    }
}

/// A validated exposure mapping bound to a clustering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposureMapping {
    kind: ExposureKind,
    arm_count: Label,
    // lowest-numbered unit (0-based) of each unit's cluster
    representative: Vec<usize>,
}

impl ExposureMapping {
    pub fn new(kind: ExposureKind, arm_count: Label, clustering: &Clustering) -> Result<Self> {
        if arm_count < 1 {
            return Err(Error::Parameter("arm count must be at least 1".into()));
        }
        if let ExposureKind::NeighborFractionThreshold {
            numerator,
            denominator,
        } = kind
        {
            if numerator == 0 || numerator >= denominator {
                return Err(Error::Parameter(format!(
                    "threshold {numerator}/{denominator} is not in (0, 1)"
                )));
            }
            if arm_count != 2 {
                return Err(Error::Parameter(format!(
                    "neighbour-fraction exposure needs exactly 2 arms, got {arm_count}"
                )));
            }
        }
        let representative = clustering
            .assignment()
            .iter()
            .map(|&q| clustering.members(q)[0] - 1)
            .collect();
        Ok(Self {
            kind,
            arm_count,
            representative,
        })
    }

    pub fn kind(&self) -> &ExposureKind {
        &self.kind
    }

    /// `K`, the number of real arms per unit.
    pub fn arm_count(&self) -> Label {
        self.arm_count
    }

    /// `d_s`, the size of the exposure label set.
    pub fn exposure_arm_count(&self) -> Label {
        match self.kind {
            ExposureKind::NeighborFractionThreshold { .. } => 2,
            _ => self.arm_count,
        }
    }

    /// Exposure label of the 1-based `unit` under the real assignment `real_arm`.
    pub fn exposure_of(&self, unit: usize, real_arm: &[Label], network: &Network) -> Result<Label> {
        let n = network.n_units();
        if real_arm.len() != n || self.representative.len() != n {
            return Err(Error::Parameter(format!(
                "assignment has {} entries, network has {n} units",
                real_arm.len()
            )));
        }
        if unit == 0 || unit > n {
            return Err(Error::Structure(format!("unit {unit} outside 1..={n}")));
        }
        if let Some(&bad) = real_arm.iter().find(|&&a| a >= self.arm_count) {
            return Err(Error::Parameter(format!(
                "arm label {bad} outside 0..{}",
                self.arm_count
            )));
        }
        Ok(match self.kind {
            ExposureKind::PerUnitArm => real_arm[unit - 1],
            ExposureKind::GlobalSwitchback => real_arm[0],
            ExposureKind::ClusterIndexArm => real_arm[self.representative[unit - 1]],
            ExposureKind::NeighborFractionThreshold {
                numerator,
                denominator,
            } => {
                let neighbors = network.neighbors(unit)?;
                if neighbors.is_empty() {
                    return Err(Error::IsolatedUnit { unit });
                }
                let treated = neighbors.iter().filter(|&&j| real_arm[j - 1] == 1).count() as u128;
                let degree = neighbors.len() as u128;
                // treated / degree < numerator / denominator, in exact integers
                Label::from(treated * u128::from(denominator) < u128::from(numerator) * degree)
            }
        })
    }

    /// Componentwise exposure over all units.
    pub fn exposure_vector(&self, real_arm: &[Label], network: &Network) -> Result<Vec<Label>> {
        (1..=network.n_units())
            .map(|u| self.exposure_of(u, real_arm, network))
            .collect()
    }
}

/// One label per unit, constant within clusters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExposureSuperArm {
    pub per_unit: Vec<Label>,
    pub cluster_profile: Vec<Label>,
}

impl ExposureSuperArm {
    /// Expands a cluster profile to units.
    pub fn from_profile(profile: Vec<Label>, clustering: &Clustering) -> Self {
        let per_unit = clustering
            .assignment()
            .iter()
            .map(|&q| profile[q])
            .collect();
        Self {
            per_unit,
            cluster_profile: profile,
        }
    }

    fn label(&self) -> String {
        let parts: Vec<String> = self.cluster_profile.iter().map(Label::to_string).collect();
        parts.join(" ")
    }
}

/// The legitimate set of exposure super arms with a witness pool for each.
#[derive(Debug, Clone)]
pub struct LegitimateArmIndex {
    mapping: ExposureMapping,
    arms: Vec<ExposureSuperArm>,
    witness_pools: Vec<Vec<Vec<Label>>>,
}

impl LegitimateArmIndex {
    /// Enumerates every cluster-switchback real assignment (`K^C` of them),
    /// maps each through the exposure mapping, and keeps the cluster-constant
    /// images. Arms are ordered lexicographically by cluster profile; witness
    /// pools are in enumeration order.
    pub fn enumerate(
        mapping: &ExposureMapping,
        network: &Network,
        clustering: &Clustering,
        witness_budget: u64,
    ) -> Result<Self> {
        if witness_budget == 0 {
            return Err(Error::Parameter("witness budget must be at least 1".into()));
        }
        if clustering.n_units() != network.n_units() {
            return Err(Error::Structure(format!(
                "clustering covers {} units, network has {}",
                clustering.n_units(),
                network.n_units()
            )));
        }
        let c = clustering.len() as u32;
        let profiles = u128::from(mapping.exposure_arm_count())
            .checked_pow(c)
            .unwrap_or(u128::MAX);
        if profiles > MAX_PROFILES {
            return Err(Error::BudgetExceeded {
                candidates: profiles,
                budget: MAX_PROFILES,
            });
        }
        let k = mapping.arm_count();
        let candidates = u128::from(k).checked_pow(c).unwrap_or(u128::MAX);
        if candidates > u128::from(witness_budget) {
            return Err(Error::BudgetExceeded {
                candidates,
                budget: u128::from(witness_budget),
            });
        }

        let assignment = clustering.assignment();
        let mut found: BTreeMap<Vec<Label>, Vec<Vec<Label>>> = BTreeMap::new();
        let mut cluster_arms = vec![0 as Label; clustering.len()];
        for _ in 0..candidates {
            let real: Vec<Label> = assignment.iter().map(|&q| cluster_arms[q]).collect();
            let exposure = mapping.exposure_vector(&real, network)?;
            if let Some(profile) = cluster_constant_profile(&exposure, clustering) {
                found.entry(profile).or_default().push(real);
            }
            // odometer increment, last cluster fastest
            for slot in cluster_arms.iter_mut().rev() {
                *slot += 1;
                if *slot < k {
                    break;
                }
                *slot = 0;
            }
        }

        if found.len() < 2 {
            return Err(Error::ConditionViolation(format!(
                "only {} legitimate exposure super arm(s); at least 2 are required",
                found.len()
            )));
        }
        let (arms, witness_pools) = found
            .into_iter()
            .map(|(profile, pool)| (ExposureSuperArm::from_profile(profile, clustering), pool))
            .unzip();
        Ok(Self {
            mapping: mapping.clone(),
            arms,
            witness_pools,
        })
    }

    pub fn mapping(&self) -> &ExposureMapping {
        &self.mapping
    }

    pub fn arms(&self) -> &[ExposureSuperArm] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn arm(&self, index: usize) -> Result<&ExposureSuperArm> {
        self.arms
            .get(index)
            .ok_or_else(|| Error::UnknownArm(format!("index {index} of {}", self.arms.len())))
    }

    pub fn witness_pool(&self, index: usize) -> Result<&[Vec<Label>]> {
        self.witness_pools
            .get(index)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownArm(format!("index {index} of {}", self.arms.len())))
    }

    pub fn position(&self, arm: &ExposureSuperArm) -> Result<usize> {
        self.arms
            .binary_search_by(|a| a.cluster_profile.cmp(&arm.cluster_profile))
            .ok()
            .filter(|&i| self.arms[i].per_unit == arm.per_unit)
            .ok_or_else(|| Error::UnknownArm(arm.label()))
    }

    /// Draws a real assignment uniformly from the witness pool of the arm at `index`.
    pub fn sample_witness<R: Rng + ?Sized>(&self, index: usize, rng: &mut R) -> Result<&[Label]> {
        let pool = self.witness_pool(index)?;
        let pick = if pool.len() == 1 {
            0
        } else {
            rng.random_range(0..pool.len())
        };
        Ok(&pool[pick])
    }

    pub fn sample_real_arm<R: Rng + ?Sized>(
        &self,
        arm: &ExposureSuperArm,
        rng: &mut R,
    ) -> Result<&[Label]> {
        let index = self.position(arm)?;
        self.sample_witness(index, rng)
    }

    /// One cluster profile per line, space separated, in index order.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        for arm in &self.arms {
            let _ = writeln!(out, "{}", arm.label());
        }
        out
    }
}

fn cluster_constant_profile(exposure: &[Label], clustering: &Clustering) -> Option<Vec<Label>> {
    clustering
        .clusters()
        .iter()
        .map(|members| {
            let first = exposure[members[0] - 1];
            members
                .iter()
                .all(|&u| exposure[u - 1] == first)
                .then_some(first)
        })
        .collect()
}
