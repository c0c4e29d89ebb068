//! CSV and manifest serialization.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::CsParams;

use super::config::RunConfig;
use super::run::{Checkpoint, RunRecord};

pub const ROUNDS_HEADER: &str = "rep,t,m,arm,delta_t,pi_mad_selected,reward,expected_reward_selected,best_expected_reward,cum_regret_expected,cum_regret_realized";
pub const CS_HEADER: &str = "rep,t,pair_i,pair_j,tau_hat_bar,width,true_tau_bar,covered";
pub const SUMMARY_HEADER: &str = "algo,alpha,rep,final_regret_expected,max_ate_error,widest_pair_i,widest_pair_j,final_width,pareto_product";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Named output streams. Directories write files; tests can hash instead.
pub trait ArtifactSink {
    fn stream(&mut self, name: &str) -> Result<&mut dyn Write>;

    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Writes each stream to `root/name`, creating parent directories.
#[derive(Debug)]
pub struct DirectorySink {
    root: PathBuf,
    files: BTreeMap<String, BufWriter<File>>,
}

impl DirectorySink {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self {
            root,
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl ArtifactSink for DirectorySink {
    fn stream(&mut self, name: &str) -> Result<&mut dyn Write> {
        if !self.files.contains_key(name) {
            let path = self.root.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            self.files.insert(name.to_string(), BufWriter::new(file));
        }
        Ok(self.files.get_mut(name).expect("inserted above"))
    }

    fn finish(&mut self) -> Result<()> {
        for (name, file) in &mut self.files {
            file.flush()
                .map_err(|e| Error::io(self.root.join(name), e))?;
        }
        Ok(())
    }
}

/// Keeps every stream in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub streams: BTreeMap<String, Vec<u8>>,
}

impl ArtifactSink for MemorySink {
    fn stream(&mut self, name: &str) -> Result<&mut dyn Write> {
        Ok(self.streams.entry(name.to_string()).or_default())
    }
}

fn io_err(name: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(name, e)
}

pub fn write_line(sink: &mut dyn ArtifactSink, name: &str, line: &str) -> Result<()> {
    let w = sink.stream(name)?;
    w.write_all(line.as_bytes()).map_err(io_err(name))?;
    w.write_all(b"\n").map_err(io_err(name))
}

pub fn write_round_rows(w: &mut dyn Write, record: &RunRecord) -> std::io::Result<()> {
    for r in &record.rounds {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            record.rep,
            r.t,
            r.block,
            r.arm,
            fmt_f64(r.delta),
            fmt_f64(r.propensity),
            fmt_f64(r.reward),
            fmt_f64(r.expected_reward),
            fmt_f64(r.best_expected_reward),
            fmt_f64(r.cum_regret_expected),
            fmt_f64(r.cum_regret_realized),
        )?;
    }
    Ok(())
}

/// Rows for each checkpoint and each of `pairs`.
pub fn write_cs_rows(
    w: &mut dyn Write,
    rep: u64,
    checkpoints: &[Checkpoint],
    pairs: &[(usize, usize)],
    params: &CsParams,
) -> std::io::Result<()> {
    for c in checkpoints {
        for &(i, j) in pairs {
            let estimate = c.estimate(i, j);
            let truth = c.true_ate(i, j);
            let width = c.width(i, j, params);
            let covered = (estimate - truth).abs() <= width;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                rep,
                c.t,
                i,
                j,
                fmt_f64(estimate),
                fmt_f64(width),
                fmt_f64(truth),
                u8::from(covered),
            )?;
        }
    }
    Ok(())
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub algo: &'static str,
    pub alpha: f64,
    pub rep: u64,
    pub final_regret_expected: f64,
    pub max_ate_error: f64,
    pub widest_pair: (usize, usize),
    pub final_width: f64,
    pub pareto_product: f64,
}

impl SummaryRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.algo,
            fmt_f64(self.alpha),
            self.rep,
            fmt_f64(self.final_regret_expected),
            fmt_f64(self.max_ate_error),
            self.widest_pair.0,
            self.widest_pair.1,
            fmt_f64(self.final_width),
            fmt_f64(self.pareto_product),
        )
    }
}

/// Parses a `summary.csv` stream back into rows.
pub fn read_summary<R: BufRead>(reader: R) -> Result<Vec<SummaryRow>> {
    let bad =
        |line: usize, what: &str| Error::Parameter(format!("summary.csv line {line}: {what}"));
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io("summary.csv", e))?
        .ok_or_else(|| bad(1, "missing header"))?;
    if header != SUMMARY_HEADER {
        return Err(bad(1, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let n = k + 2;
        let line = line.map_err(|e| Error::io("summary.csv", e))?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(n, "expected 9 fields"));
        }
        let algo = match f[0] {
            "exp3-n-cs" => "exp3-n-cs",
            "standard" => "standard",
            "uniform" => "uniform",
            _ => return Err(bad(n, "unknown algorithm")),
        };
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad float"));
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad(n, "bad integer"));
        rows.push(SummaryRow {
            algo,
            alpha: float(f[1])?,
            rep: int(f[2])?,
            final_regret_expected: float(f[3])?,
            max_ate_error: float(f[4])?,
            widest_pair: (int(f[5])? as usize, int(f[6])? as usize),
            final_width: float(f[7])?,
            pareto_product: float(f[8])?,
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    seeds: Seeds,
    n_arms: usize,
    cs_stride: u64,
    warnings: &'a [String],
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct Seeds {
    master_seed: u64,
    derivation: &'static str,
}

/// TOML manifest: code version, seeds, warnings and the resolved config.
pub fn manifest_toml(config: &RunConfig, n_arms: usize, warnings: &[String]) -> Result<String> {
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        seeds: Seeds {
            master_seed: config.master_seed,
            derivation: "ChaCha8(master_seed), stream 4*rep + k; k = 0 environment, 1 policy, 2 witness, 3 reward",
        },
        n_arms,
        cs_stride: config.cs_stride(),
        warnings,
        config,
    };
    toml::to_string(&manifest).map_err(|e| Error::config("manifest", e.to_string()))
}
