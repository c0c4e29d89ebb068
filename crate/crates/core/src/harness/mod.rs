//! Replications, metrics and artifacts.

pub mod config;
pub mod export;
pub mod metrics;
pub mod parallel;
pub mod run;

use std::ops::Range;

use crate::error::Result;
use crate::policy::MadSchedule;

pub use config::{
    preset_instance, CsPairs, Instance, InstanceSpec, LoggingConfig, RunConfig, PRESETS,
};
pub use export::{ArtifactSink, DirectorySink, MemorySink, SummaryRow};
pub use metrics::{MeanSe, MetricsSummary, Quartiles};
pub use run::{run_replication, RepStreams, RunRecord};

use export::{
    fmt_f64, write_cs_rows, write_line, write_round_rows, CS_HEADER, ROUNDS_HEADER, SUMMARY_HEADER,
};
use metrics::{max_ate_error, pareto_product};
use run::Checkpoint;

/// Replications are run in chunks of this many, then written in order.
const CHUNK: u64 = 32;

/// Results for one schedule.
#[derive(Debug, Clone)]
pub struct VariantResult {
    pub schedule: MadSchedule,
    pub summary: MetricsSummary,
    pub rows: Vec<SummaryRow>,
}

/// What is kept per replication once its rounds are written.
struct Kept {
    final_regret: f64,
    regret_at: Vec<f64>,
    max_error: f64,
    final_widths: Vec<f64>,
    checkpoints: Vec<Checkpoint>,
    missed: bool,
}

/// A validated configuration with its instance built.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: RunConfig,
    instance: Instance,
    warnings: Vec<String>,
    sequential: bool,
}

impl Experiment {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let instance = config.instance.build()?;
        let mut warnings = Vec::new();
        if config.horizon < instance.n_arms() as u64 {
            let w = format!(
                "horizon {} is below the number of legitimate arms {}",
                config.horizon,
                instance.n_arms()
            );
            log::warn!("{w}");
            warnings.push(w);
        }
        run::tracked_pairs(&config, instance.n_arms())?;
        Ok(Self {
            config,
            instance,
            warnings,
            sequential: false,
        })
    }

    /// Forces sequential replications regardless of the `parallel` feature.
    pub fn sequential(mut self, yes: bool) -> Self {
        self.sequential = yes;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Runs replications `reps` of one schedule, in order.
    pub fn records(&self, schedule: MadSchedule, reps: Range<u64>) -> Result<Vec<RunRecord>> {
        let f = |rep| run_replication(&self.config, &self.instance, schedule, rep);
        let out = if self.sequential {
            parallel::map_reps_sequential(reps, f)
        } else {
            parallel::map_reps(reps, f)
        };
        out.into_iter().collect()
    }

    /// Runs every schedule and writes all artifacts.
    pub fn run_all(&self, sink: &mut dyn ArtifactSink) -> Result<Vec<VariantResult>> {
        let manifest = export::manifest_toml(&self.config, self.instance.n_arms(), &self.warnings)?;
        write_line(sink, "manifest.toml", manifest.trim_end())?;
        write_line(sink, "arms.txt", self.instance.index.listing().trim_end())?;
        write_line(sink, "summary.csv", SUMMARY_HEADER)?;
        let mut results = Vec::new();
        for &schedule in &self.config.schedules {
            let result = self.run_variant(schedule, sink)?;
            for row in &result.rows {
                write_line(sink, "summary.csv", &row.to_csv())?;
            }
            results.push(result);
        }
        sink.finish()?;
        Ok(results)
    }

    /// Runs one schedule, writing `<variant>/rounds.csv` and `<variant>/cs.csv`.
    pub fn run_variant(
        &self,
        schedule: MadSchedule,
        sink: &mut dyn ArtifactSink,
    ) -> Result<VariantResult> {
        let label = schedule.variant_label();
        let rounds_name = format!("{label}/rounds.csv");
        let cs_name = format!("{label}/cs.csv");
        let n = self.instance.n_arms();
        let pairs = run::tracked_pairs(&self.config, n)?;
        let reps = self.config.replications;
        log::info!(
            "{label}: {reps} replications of {} rounds over {n} arms",
            self.config.horizon
        );

        write_line(sink, &rounds_name, ROUNDS_HEADER)?;
        let mut kept: Vec<Kept> = Vec::with_capacity(reps as usize);
        let mut start = 0;
        while start < reps {
            let end = (start + CHUNK).min(reps);
            for record in self.records(schedule, start..end)? {
                let w = sink.stream(&rounds_name)?;
                write_round_rows(w, &record)
                    .map_err(|e| crate::error::Error::io(&rounds_name, e))?;
                kept.push(Kept {
                    final_regret: record.final_regret(),
                    regret_at: record
                        .checkpoints
                        .iter()
                        .map(|c| record.rounds[c.t as usize - 1].cum_regret_expected)
                        .collect(),
                    max_error: if record.all_pairs_tracked {
                        max_ate_error(&record)?
                    } else {
                        f64::NAN
                    },
                    final_widths: record.pairs.iter().map(|p| p.width).collect(),
                    missed: record.pairs.iter().any(|p| p.first_miss.is_some()),
                    checkpoints: record.checkpoints,
                });
            }
            start = end;
        }

        let mean_widths: Vec<f64> = (0..pairs.len())
            .map(|k| kept.iter().map(|r| r.final_widths[k]).sum::<f64>() / kept.len() as f64)
            .collect();
        let mut widest = 0;
        for (k, &w) in mean_widths.iter().enumerate() {
            if w > mean_widths[widest] {
                widest = k;
            }
        }
        let widest_pair = pairs[widest];

        write_line(sink, &cs_name, CS_HEADER)?;
        let cs_pairs = match self.config.logging.cs_pairs {
            CsPairs::Widest => vec![widest_pair],
            CsPairs::All => pairs.clone(),
        };
        for (rep, r) in kept.iter().enumerate() {
            let w = sink.stream(&cs_name)?;
            write_cs_rows(w, rep as u64, &r.checkpoints, &cs_pairs, &self.config.cs)
                .map_err(|e| crate::error::Error::io(&cs_name, e))?;
        }

        let rows: Vec<SummaryRow> = kept
            .iter()
            .enumerate()
            .map(|(rep, r)| SummaryRow {
                algo: schedule.algo_name(),
                alpha: schedule.alpha(),
                rep: rep as u64,
                final_regret_expected: r.final_regret,
                max_ate_error: r.max_error,
                widest_pair,
                final_width: r.final_widths[widest],
                pareto_product: pareto_product(r.final_regret, r.max_error),
            })
            .collect();

        let column = |f: &dyn Fn(&Kept) -> f64| kept.iter().map(f).collect::<Vec<f64>>();
        let rounds: Vec<u64> = kept[0].checkpoints.iter().map(|c| c.t).collect();
        let (wi, wj) = widest_pair;
        let summary = MetricsSummary {
            replications: kept.len(),
            regret: (0..rounds.len())
                .map(|k| MeanSe::of(&column(&|r| r.regret_at[k])))
                .collect(),
            widest_width: (0..rounds.len())
                .map(|k| {
                    MeanSe::of(&column(&|r| {
                        r.checkpoints[k].width(wi, wj, &self.config.cs)
                    }))
                })
                .collect(),
            rounds,
            final_regret: MeanSe::of(&column(&|r| r.final_regret)),
            max_error: MeanSe::of(&column(&|r| r.max_error)),
            max_error_quartiles: Quartiles::of(&column(&|r| r.max_error)),
            widest_pair,
            pareto: 0.0,
            coverage_failures: self
                .config
                .logging
                .monitor_coverage
                .then(|| kept.iter().filter(|r| r.missed).count()),
        };
        let summary = MetricsSummary {
            pareto: pareto_product(summary.final_regret.mean, summary.max_error.mean),
            ..summary
        };
        log::info!(
            "{label}: regret {} (se {}), max error median {}",
            fmt_f64(summary.final_regret.mean),
            fmt_f64(summary.final_regret.se),
            fmt_f64(summary.max_error_quartiles.median)
        );
        Ok(VariantResult {
            schedule,
            summary,
            rows,
        })
    }
}
