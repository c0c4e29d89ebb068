//! Run configuration, presets and flat `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::exposure::{ExposureKind, ExposureMapping, Label, LegitimateArmIndex};
use crate::inference::CsParams;
use crate::policy::MadSchedule;
use crate::topology::{Clustering, Network, TopologyDoc};

pub const PRESETS: [&str; 6] = [
    "main",
    "main_scaled",
    "instance1",
    "instance2",
    "instance3",
    "instance4",
];

pub const DEFAULT_WITNESS_BUDGET: u64 = 1 << 20;

/// Network, clustering, exposure mapping and reward generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub n_units: usize,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    pub clusters: Vec<Vec<usize>>,
    /// `K`.
    pub arm_count: Label,
    pub mapping: ExposureKind,
    pub environment: EnvironmentSpec,
    #[serde(default = "default_witness_budget")]
    pub witness_budget: u64,
}

fn default_witness_budget() -> u64 {
    DEFAULT_WITNESS_BUDGET
}

impl InstanceSpec {
    pub fn topology(&self) -> TopologyDoc {
        TopologyDoc {
            n_units: self.n_units,
            edges: self.edges.clone(),
            clusters: self.clusters.clone(),
        }
    }

    pub fn build(&self) -> Result<Instance> {
        let (network, clustering) = self.topology().build()?;
        let mapping = ExposureMapping::new(self.mapping.clone(), self.arm_count, &clustering)?;
        let index =
            LegitimateArmIndex::enumerate(&mapping, &network, &clustering, self.witness_budget)?;
        Ok(Instance {
            network,
            clustering,
            index,
            environment: self.environment.clone(),
        })
    }
}

/// Immutable, validated instance shared by every replication.
#[derive(Debug, Clone)]
pub struct Instance {
    pub network: Network,
    pub clustering: Clustering,
    pub index: LegitimateArmIndex,
    pub environment: EnvironmentSpec,
}

impl Instance {
    pub fn n_arms(&self) -> usize {
        self.index.len()
    }
}

/// Which pairs get rows in `cs.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsPairs {
    /// The pair with the largest mean final width for the variant.
    Widest,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoggingConfig {
    /// Rounds between confidence-sequence checkpoints; `None` picks `ceil(T / 500)`.
    pub cs_stride: Option<u64>,
    pub cs_pairs: CsPairs,
    /// Restricts inference bookkeeping to these pairs (0-based arm indices).
    pub tracked_pairs: Option<Vec<[usize; 2]>>,
    /// Keep every round's probability vectors in the record.
    pub log_probabilities: bool,
    /// Check every tracked pair's interval against the truth at every round.
    pub monitor_coverage: bool,
    /// Regret trajectory against the best arm of each prefix instead of the horizon.
    pub per_round_comparator: bool,
}

impl Default for LoggingConfig {
    fn default() -> Self {
        Self {
            cs_stride: None,
            cs_pairs: CsPairs::Widest,
            tracked_pairs: None,
            log_probabilities: false,
            monitor_coverage: false,
            per_round_comparator: false,
        }
    }
}

/// A fully resolved run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub horizon: u64,
    pub replications: u64,
    pub master_seed: u64,
    pub schedules: Vec<MadSchedule>,
    #[serde(default)]
    pub cs: CsParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_clip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub logging: LoggingConfig,
    #[serde(default)]
    pub notes: Vec<String>,
    pub instance: InstanceSpec,
}

/// File form: everything optional, layered over `preset` when given.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigDoc {
    preset: Option<String>,
    name: Option<String>,
    horizon: Option<u64>,
    replications: Option<u64>,
    master_seed: Option<u64>,
    schedules: Option<Vec<MadSchedule>>,
    cs: Option<CsParams>,
    weight_clip: Option<f64>,
    out_dir: Option<PathBuf>,
    logging: Option<LoggingConfig>,
    notes: Option<Vec<String>>,
    instance: Option<InstanceSpec>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: RunConfigDoc = toml::from_str(text).map_err(|e| {
            let key = toml_error_key(&e).unwrap_or_else(|| "config".to_string());
            Error::config(key, e.message().to_string())
        })?;
        let mut cfg = match &doc.preset {
            Some(name) => preset_instance(name)?,
            None => {
                let instance = doc
                    .instance
                    .clone()
                    .ok_or_else(|| Error::config("instance", "required when no preset is given"))?;
                RunConfig {
                    name: "custom".into(),
                    horizon: 1000,
                    replications: 1,
                    master_seed: 0,
                    schedules: standard_variants(),
                    cs: CsParams::default(),
                    weight_clip: None,
                    out_dir: None,
                    logging: LoggingConfig::default(),
                    notes: Vec::new(),
                    instance,
                }
            }
        };
        if let Some(v) = doc.name {
            cfg.name = v;
        }
        if let Some(v) = doc.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = doc.replications {
            cfg.replications = v;
        }
        if let Some(v) = doc.master_seed {
            cfg.master_seed = v;
        }
        if let Some(v) = doc.schedules {
            cfg.schedules = v;
        }
        if let Some(v) = doc.cs {
            cfg.cs = v;
        }
        if doc.weight_clip.is_some() {
            cfg.weight_clip = doc.weight_clip;
        }
        if doc.out_dir.is_some() {
            cfg.out_dir = doc.out_dir;
        }
        if let Some(v) = doc.logging {
            cfg.logging = v;
        }
        if let Some(v) = doc.notes {
            cfg.notes = v;
        }
        if let Some(v) = doc.instance {
            cfg.instance = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    /// Checks every parameter domain without building the instance.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if self.schedules.is_empty() {
            return Err(Error::config(
                "schedules",
                "at least one schedule is required",
            ));
        }
        for s in &self.schedules {
            s.validate()?;
        }
        self.cs.validate()?;
        if let Some(c) = self.weight_clip {
            if c.is_nan() || c < 1.0 {
                return Err(Error::config("weight_clip", "must be at least 1"));
            }
        }
        if self.logging.cs_stride == Some(0) {
            return Err(Error::config("logging.cs_stride", "must be at least 1"));
        }
        Ok(())
    }

    pub fn cs_stride(&self) -> u64 {
        self.logging
            .cs_stride
            .unwrap_or_else(|| self.horizon.div_ceil(500).max(1))
    }

    /// Applies one flat override such as `horizon=5000` or `alpha=0.3`.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
        }
        fn parse_bool(key: &str, value: &str) -> Result<bool> {
            match value.trim() {
                "1" | "true" | "yes" => Ok(true),
                "0" | "false" | "no" => Ok(false),
                other => Err(Error::config(
                    key,
                    format!("cannot parse `{other}` as a boolean"),
                )),
            }
        }
        match key {
            "name" => self.name = value.to_string(),
            "horizon" | "T" => self.horizon = parse(key, value)?,
            "reps" | "replications" => self.replications = parse(key, value)?,
            "seed" | "master_seed" => self.master_seed = parse(key, value)?,
            "alpha" => {
                let alpha: f64 = parse(key, value)?;
                self.schedules = vec![MadSchedule::power_law(alpha)?];
            }
            "algo" => {
                self.schedules = vec![match value.trim() {
                    "standard" => MadSchedule::Standard,
                    "uniform" => MadSchedule::Uniform,
                    other => {
                        return Err(Error::config(
                            key,
                            format!("unknown algorithm `{other}`; use alpha=... for exp3-n-cs"),
                        ))
                    }
                }]
            }
            "eta" | "cs.eta" => self.cs.eta = parse(key, value)?,
            "tilde_delta" | "cs.tilde_delta" => self.cs.tilde_delta = parse(key, value)?,
            "weight_clip" => self.weight_clip = Some(parse(key, value)?),
            "out" | "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "cs_stride" => self.logging.cs_stride = Some(parse(key, value)?),
            "cs_pairs" => {
                self.logging.cs_pairs = match value.trim() {
                    "widest" => CsPairs::Widest,
                    "all" => CsPairs::All,
                    other => return Err(Error::config(key, format!("unknown pair set `{other}`"))),
                }
            }
            "monitor_coverage" => self.logging.monitor_coverage = parse_bool(key, value)?,
            "log_probabilities" => self.logging.log_probabilities = parse_bool(key, value)?,
            "per_round_comparator" => self.logging.per_round_comparator = parse_bool(key, value)?,
            "witness_budget" => self.instance.witness_budget = parse(key, value)?,
            "resample_period" => match &mut self.instance.environment {
                EnvironmentSpec::BernoulliDrift {
                    resample_period, ..
                } => *resample_period = parse(key, value)?,
                _ => {
                    return Err(Error::config(
                        key,
                        "only the bernoulli_drift environment has a resample period",
                    ))
                }
            },
            "env_seed" => match &mut self.instance.environment {
                EnvironmentSpec::BernoulliDrift { seed, .. } => *seed = Some(parse(key, value)?),
                _ => {
                    return Err(Error::config(
                        key,
                        "only the bernoulli_drift environment takes a seed",
                    ))
                }
            },
            _ => return Err(Error::config(key, "unknown override key")),
        }
        self.validate()
    }
}

fn toml_error_key(e: &toml::de::Error) -> Option<String> {
    // toml reports unknown fields as "unknown field `x`"
    let msg = e.message();
    let start = msg.find('`')? + 1;
    let end = start + msg[start..].find('`')?;
    Some(msg[start..end].to_string())
}

/// Five power laws plus the two baselines.
pub fn standard_variants() -> Vec<MadSchedule> {
    let mut v: Vec<MadSchedule> = [0.1, 0.2, 0.3, 0.4, 0.49]
        .into_iter()
        .map(|alpha| MadSchedule::PowerLaw { alpha })
        .collect();
    v.push(MadSchedule::Standard);
    v.push(MadSchedule::Uniform);
    v
}

fn clique(members: &[usize]) -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    for (k, &i) in members.iter().enumerate() {
        for &j in &members[k + 1..] {
            out.push([i, j]);
        }
    }
    out
}

/// Center unit 1 in its own cluster, `outer` clusters of `size` units; each
/// outer cluster is a clique and every unit is tied to the center.
fn center_and_cliques(outer: usize, size: usize) -> (usize, Vec<[usize; 2]>, Vec<Vec<usize>>) {
    let n = 1 + outer * size;
    let mut edges: Vec<[usize; 2]> = (2..=n).map(|u| [1, u]).collect();
    let mut clusters = vec![vec![1]];
    for q in 0..outer {
        let members: Vec<usize> = (2 + q * size..2 + (q + 1) * size).collect();
        edges.extend(clique(&members));
        clusters.push(members);
    }
    (n, edges, clusters)
}

fn threshold_instance(
    n_units: usize,
    edges: Vec<[usize; 2]>,
    clusters: Vec<Vec<usize>>,
) -> InstanceSpec {
    InstanceSpec {
        n_units,
        edges,
        clusters,
        arm_count: 2,
        mapping: ExposureKind::half_threshold(),
        environment: EnvironmentSpec::drift(1000),
        witness_budget: DEFAULT_WITNESS_BUDGET,
    }
}

/// Pinned configuration for a named experiment.
pub fn preset_instance(name: &str) -> Result<RunConfig> {
    let horizon_note =
        "horizon 10000 is a reconstruction; the original horizon is not stated".to_string();
    let (instance, replications, notes) = match name {
        "main" | "main_scaled" => {
            let size = if name == "main" { 20 } else { 2 };
            let (n, edges, clusters) = center_and_cliques(5, size);
            let reps = if name == "main" { 1000 } else { 200 };
            let notes = vec![
                "outer clusters are cliques and every unit is tied to the center (reconstruction)"
                    .into(),
            ];
            (threshold_instance(n, edges, clusters), reps, notes)
        }
        "instance1" => (
            InstanceSpec {
                n_units: 1,
                edges: vec![],
                clusters: vec![vec![1]],
                arm_count: 5,
                mapping: ExposureKind::PerUnitArm,
                environment: EnvironmentSpec::drift(1000),
                witness_budget: DEFAULT_WITNESS_BUDGET,
            },
            100,
            vec![],
        ),
        "instance2" => {
            let edges = (1..=6).map(|i| [i, i % 6 + 1]).collect();
            let clusters = vec![vec![1, 2], vec![3, 4], vec![5, 6]];
            let notes = vec!["ring clusters {1,2},{3,4},{5,6} (reconstruction)".into()];
            (threshold_instance(6, edges, clusters), 100, notes)
        }
        "instance3" => {
            let edges = (1..10).map(|i| [i, i + 1]).collect();
            let clusters = vec![vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9, 10]];
            let notes =
                vec!["path 1-2-...-10 with clusters {1-3},{4-6},{7-10} (reconstruction)".into()];
            (threshold_instance(10, edges, clusters), 100, notes)
        }
        "instance4" => {
            let (n, edges, clusters) = center_and_cliques(3, 3);
            let notes = vec![
                "outer triangles are cliques and every unit is tied to the center (reconstruction)"
                    .into(),
            ];
            (threshold_instance(n, edges, clusters), 100, notes)
        }
        other => {
            return Err(Error::config(
                "preset",
                format!(
                    "unknown preset `{other}`; expected one of {}",
                    PRESETS.join(", ")
                ),
            ))
        }
    };
    let mut notes = notes;
    notes.push(horizon_note);
    Ok(RunConfig {
        name: name.to_string(),
        horizon: 10_000,
        replications,
        master_seed: 0,
        schedules: standard_variants(),
        cs: CsParams::default(),
        weight_clip: None,
        out_dir: None,
        logging: LoggingConfig::default(),
        notes,
        instance,
    })
}
