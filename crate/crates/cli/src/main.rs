mod commands;
mod config;
mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gapcf::counterfactual::StopRule;
use gapcf::tally::TallyMode;

use config::{ConfigError, ReferenceChoice, RunConfig, UtilityKindConfig};

/// Random forest counterfactual explanations with RF-GAP distances and
/// partition-crossing tallies.
#[derive(Parser)]
#[command(name = "gapcf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest and report train/test accuracy.
    Train(Common),
    /// Nearest counterfactual for one test row, with its partition tally.
    Explain {
        #[command(flatten)]
        common: Common,
        /// Test row to explain.
        #[arg(long)]
        instance: usize,
    },
    /// Hill-climbing counterfactual trajectory for one test row.
    Trajectory {
        #[command(flatten)]
        common: Common,
        /// Test row to start from.
        #[arg(long)]
        instance: usize,
        /// Stop rule (overrides search.stop).
        #[arg(long, value_enum)]
        stop: Option<StopArg>,
    },
    /// Top-k perturbation flip curves and the sparsity study.
    Evaluate(Common),
    /// 2-D MDS coordinates of a distance matrix.
    Embed(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Master seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Forest file; defaults to `<output_dir>/forest.json`.
    #[arg(long)]
    forest: Option<PathBuf>,
    /// Number of trees (overrides `forest.n_trees`).
    #[arg(long)]
    n_trees: Option<usize>,
    /// Maximum tree depth (overrides `forest.max_depth`).
    #[arg(long)]
    max_depth: Option<usize>,
    /// Distance metric: euclidean or rf_gap (overrides `search.metric`).
    #[arg(long)]
    metric: Option<String>,
    /// Counterfactual pool (overrides `search.reference`).
    #[arg(long, value_enum)]
    reference: Option<ReferenceChoice>,
    /// Target class name; implies a class-probability utility.
    #[arg(long)]
    target: Option<String>,
    /// Minimum utility gain (overrides `utility.delta`).
    #[arg(long)]
    delta: Option<f64>,
    /// Tally mode: region_restricted or global_thresholds.
    #[arg(long)]
    tally_mode: Option<TallyMode>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StopArg {
    Convergence,
    ClassFlip,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<(RunConfig, Option<PathBuf>)> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output_dir {
            cfg.output_dir = o.clone();
        }
        if let Some(n) = self.n_trees {
            cfg.forest.n_trees = n;
        }
        if let Some(d) = self.max_depth {
            cfg.forest.max_depth = d;
        }
        if let Some(m) = &self.metric {
            cfg.search.metric = m.clone();
        }
        if let Some(r) = self.reference {
            cfg.search.reference = r;
        }
        if let Some(t) = &self.target {
            cfg.utility.kind = UtilityKindConfig::ClassProbability;
            cfg.utility.target = Some(t.clone());
        }
        if let Some(d) = self.delta {
            cfg.utility.delta = d;
        }
        if let Some(m) = self.tally_mode {
            cfg.tally.mode = m;
        }
        cfg.validate()?;
        Ok((cfg, self.forest.clone()))
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(c) => {
            let (cfg, forest) = c.resolve()?;
            commands::train(&cfg, forest)
        }
        Command::Explain { common, instance } => {
            let (cfg, forest) = common.resolve()?;
            commands::explain(&cfg, forest, instance)
        }
        Command::Trajectory { common, instance, stop } => {
            let (mut cfg, forest) = common.resolve()?;
            if let Some(s) = stop {
                cfg.search.stop = match s {
                    StopArg::Convergence => StopRule::Convergence,
                    StopArg::ClassFlip => StopRule::ClassFlip,
                };
            }
            commands::trajectory(&cfg, forest, instance)
        }
        Command::Evaluate(c) => {
            let (cfg, forest) = c.resolve()?;
            commands::evaluate(&cfg, forest)
        }
        Command::Embed(c) => {
            let (cfg, forest) = c.resolve()?;
            commands::embed(&cfg, forest)
        }
    }
}

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NO_COUNTERFACTUAL: u8 = 4;

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(g) = cause.downcast_ref::<gapcf::Error>() {
            return match g {
                gapcf::Error::NoCounterfactual => EXIT_NO_COUNTERFACTUAL,
                gapcf::Error::Argument(_) => EXIT_CONFIG,
                gapcf::Error::EmptyReference => EXIT_DATA,
                g if g.is_data_error() => EXIT_DATA,
                _ => EXIT_OTHER,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_DATA;
        }
    }
    EXIT_OTHER
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
