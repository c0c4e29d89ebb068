//! `mabn`: run, validate and reproduce bandit-under-interference experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mabn_core::harness::{preset_instance, DirectorySink, Experiment, VariantResult, PRESETS};
use mabn_core::{Error, RunConfig};

/// Environment variable naming the output directory when neither `--out`
/// nor the config names one.
const OUT_ENV: &str = "MABN_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "mabn",
    version,
    about = "Adversarial bandits under network interference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a configuration and write CSV artifacts.
    Run(RunArgs),
    /// List the built-in presets.
    Presets,
    /// Check a configuration and enumerate its arms without running or writing anything.
    Validate {
        /// Configuration file (TOML).
        #[arg(value_name = "CONFIG", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
    },
    /// Rerun a published experiment family.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
struct Overrides {
    /// Horizon T.
    #[arg(long)]
    horizon: Option<u64>,
    /// Number of replications.
    #[arg(long)]
    reps: Option<u64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $MABN_OUT_DIR, else ./results).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Configuration file (TOML); may itself name a preset.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Run only EXP3-N-CS with this exploration exponent.
    #[arg(long, conflicts_with = "algo")]
    alpha: Option<f64>,
    /// Run only a baseline.
    #[arg(long, value_enum)]
    algo: Option<Baseline>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Baseline {
    Standard,
    Uniform,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Figure {
    /// The scaled main instance, all seven variants.
    Fig2,
    /// Instances 1 to 4, all seven variants each.
    #[value(name = "appendixF")]
    AppendixF,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(value_enum)]
    figure: Figure,
    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Presets => {
            for name in PRESETS {
                let cfg = preset_instance(name)?;
                println!(
                    "{name:<12} {:>4} units  {:>2} clusters  {} reps",
                    cfg.instance.n_units,
                    cfg.instance.clusters.len(),
                    cfg.replications
                );
            }
            Ok(())
        }
        Command::Validate { config, preset } => {
            let cfg = match (config, preset) {
                (Some(path), _) => RunConfig::load(&path)?,
                (None, Some(name)) => preset_instance(&name)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let exp = Experiment::new(cfg)?;
            let cfg = exp.config();
            println!(
                "ok: {} units, {} legitimate arms, {} schedules, T = {}, {} replications",
                cfg.instance.n_units,
                exp.instance().n_arms(),
                cfg.schedules.len(),
                cfg.horizon,
                cfg.replications
            );
            for w in exp.warnings() {
                println!("warning: {w}");
            }
            Ok(())
        }
        Command::Run(args) => {
            let mut cfg = match (&args.config, &args.preset) {
                (Some(path), _) => RunConfig::load(path)?,
                (None, Some(name)) => preset_instance(name)?,
                (None, None) => {
                    return Err(Error::config(
                        "preset",
                        "either --config or --preset is required",
                    ))
                }
            };
            if let Some(alpha) = args.alpha {
                cfg.apply_override("alpha", &alpha.to_string())?;
            }
            if let Some(algo) = args.algo {
                let name = match algo {
                    Baseline::Standard => "standard",
                    Baseline::Uniform => "uniform",
                };
                cfg.apply_override("algo", name)?;
            }
            apply(&mut cfg, &args.overrides)?;
            let out = output_dir(&cfg, &args.overrides);
            run(cfg, &out)
        }
        Command::Reproduce(args) => {
            let base = output_dir_for(None, &args.overrides);
            let runs: Vec<(&str, PathBuf)> = match args.figure {
                Figure::Fig2 => vec![("main_scaled", base.join("fig2"))],
                Figure::AppendixF => ["instance1", "instance2", "instance3", "instance4"]
                    .into_iter()
                    .map(|name| (name, base.join("appendixF").join(name)))
                    .collect(),
            };
            for (name, out) in runs {
                let mut cfg = preset_instance(name)?;
                apply(&mut cfg, &args.overrides)?;
                run(cfg, &out)?;
            }
            Ok(())
        }
    }
}

fn apply(cfg: &mut RunConfig, o: &Overrides) -> Result<(), Error> {
    if let Some(v) = o.horizon {
        cfg.apply_override("horizon", &v.to_string())?;
    }
    if let Some(v) = o.reps {
        cfg.apply_override("replications", &v.to_string())?;
    }
    if let Some(v) = o.seed {
        cfg.apply_override("master_seed", &v.to_string())?;
    }
    for pair in &o.set {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(pair.as_str(), "expected KEY=VALUE"))?;
        cfg.apply_override(key.trim(), value)?;
    }
    Ok(())
}

fn output_dir_for(configured: Option<&Path>, o: &Overrides) -> PathBuf {
    o.out
        .clone()
        .or_else(|| configured.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn output_dir(cfg: &RunConfig, o: &Overrides) -> PathBuf {
    output_dir_for(cfg.out_dir.as_deref(), o)
}

fn run(cfg: RunConfig, out: &Path) -> Result<(), Error> {
    let exp = Experiment::new(cfg)?;
    log::info!("writing to {}", out.display());
    let mut sink = DirectorySink::new(out)?;
    let results = exp.run_all(&mut sink)?;
    print_table(exp.config(), &results);
    Ok(())
}

fn print_table(cfg: &RunConfig, results: &[VariantResult]) {
    println!(
        "{} (T = {}, {} replications)",
        cfg.name, cfg.horizon, cfg.replications
    );
    println!(
        "{:<22} {:>12} {:>9} {:>12} {:>12} {:>9}",
        "variant", "regret", "se", "max err med", "widest pair", "pareto"
    );
    for r in results {
        let s = &r.summary;
        println!(
            "{:<22} {:>12.2} {:>9.2} {:>12.4} {:>12} {:>9.3}",
            r.schedule.variant_label(),
            s.final_regret.mean,
            s.final_regret.se,
            s.max_error_quartiles.median,
            format!("({}, {})", s.widest_pair.0, s.widest_pair.1),
            s.pareto
        );
    }
}
