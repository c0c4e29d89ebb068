//! Adversarial multi-armed bandits under network interference.
//!
//! Units on a network receive arms; rewards depend on neighbors through an
//! exposure mapping. [`exposure::LegitimateArmIndex`] enumerates the
//! cluster-constant exposure super arms a learner can actually play,
//! [`policy::Exp3NCs`] runs blockwise EXP3 over them mixed with decaying
//! uniform exploration, and [`inference`] turns the logged propensities into
//! inverse-propensity effect estimates with anytime confidence sequences.
//! [`harness`] runs seeded Monte-Carlo replications and writes CSV artifacts.

pub mod environment;
pub mod error;
pub mod exposure;
pub mod harness;
pub mod inference;
pub mod policy;
pub mod topology;

pub use environment::{Environment, EnvironmentSpec, GroundTruth};
pub use error::{Error, Result};
pub use exposure::{ExposureKind, ExposureMapping, ExposureSuperArm, Label, LegitimateArmIndex};
pub use harness::{Experiment, RunConfig, RunRecord};
pub use inference::{ArmAccumulators, CsInterval, CsParams, PairInferenceState};
pub use policy::{Exp3NCs, MadSchedule};
pub use topology::{Clustering, Network, TopologyDoc};
