use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cnsim::commands::{self, RunManifest, SweepAxes};
use cnsim::optimizer::OptimizerConfig;
use cnsim::pipeline::TargetSpec;
use cnsim::scenario::{AgeShape, Rule, Scenario, Sign};
use cnsim::Error;

/// Contact-network simulator: age-structured network generation, pattern
/// metrics, SI epidemics and preference fitting.
#[derive(Parser)]
#[command(name = "cnsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Named preset such as `U_PH` or `B_H-`.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed; overrides the scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// Field override `key=value`, repeatable (e.g. `--set sdna.wp=0.1`).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, env = commands::OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
}

impl ScenarioArgs {
    fn resolve(&self) -> cnsim::Result<Scenario> {
        commands::resolve_scenario(self.scenario.as_deref(), self.preset.as_deref(), self.seed, &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate one population and network.
    Generate {
        #[command(flatten)]
        common: ScenarioArgs,
    },
    /// Run an SI epidemic on a generated or supplied network.
    Epidemic {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Edge list from a previous `generate` run.
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Run every shape x rule x transmissibility cell.
    Sweep {
        #[command(flatten)]
        common: ScenarioArgs,
        /// `ba:n,m` or `edgelist:path[#n]`; defaults to a matched BA network.
        #[arg(long)]
        target: Option<String>,
        /// Worker threads.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Comma-separated shape codes or names.
        #[arg(long, value_delimiter = ',')]
        shapes: Vec<String>,
        /// Comma-separated rules (P+, P-, H+, H-, PH).
        #[arg(long, value_delimiter = ',')]
        rules: Vec<String>,
        /// Comma-separated transmissibilities.
        #[arg(long, value_delimiter = ',')]
        taus: Vec<f64>,
    },
    /// Fit sDNA preferences to a target degree distribution.
    Optimize {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long)]
        target: Option<String>,
        /// Maximum candidate evaluations.
        #[arg(long, default_value_t = 700)]
        budget: usize,
        /// Replicate networks per candidate.
        #[arg(long, default_value_t = 5)]
        replicates: usize,
        /// Grid signs, from -1, 0, 1.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        signs: Vec<i8>,
        /// Grid weights.
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
    },
    /// Pattern metrics of an existing edge list.
    Report {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long)]
        network: PathBuf,
        /// Node count; inferred from the edge list when absent.
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        target: Option<String>,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn target_for(spec: Option<&str>, scenario: &Scenario) -> cnsim::Result<TargetSpec> {
    match spec {
        Some(s) => s.parse(),
        None => Ok(TargetSpec::ba_for(scenario)),
    }
}

fn parse_all<T: std::str::FromStr<Err = Error> + Clone>(items: &[String], all: &[T]) -> cnsim::Result<Vec<T>> {
    if items.is_empty() {
        return Ok(all.to_vec());
    }
    items.iter().map(|s| s.trim().parse()).collect()
}

fn sign_of(v: i8) -> cnsim::Result<Sign> {
    match v {
        -1 => Ok(Sign::Negative),
        0 => Ok(Sign::Neutral),
        1 => Ok(Sign::Positive),
        _ => Err(Error::invalid("signs", format!("{v} is not -1, 0 or 1"))),
    }
}

fn run(cli: Cli) -> cnsim::Result<(RunManifest, PathBuf)> {
    match cli.command {
        Command::Generate { common } => {
            let s = common.resolve()?;
            Ok((commands::cmd_generate(&s, &common.out)?, common.out))
        }
        Command::Epidemic { common, network } => {
            let s = common.resolve()?;
            Ok((commands::cmd_epidemic(&s, network.as_deref(), &common.out)?, common.out))
        }
        Command::Sweep {
            common,
            target,
            jobs,
            shapes,
            rules,
            taus,
        } => {
            let s = common.resolve()?;
            let defaults = SweepAxes::default();
            let axes = SweepAxes {
                shapes: parse_all::<AgeShape>(&shapes, &AgeShape::ALL)?,
                rules: parse_all::<Rule>(&rules, &Rule::ALL)?,
                transmissibilities: if taus.is_empty() { defaults.transmissibilities } else { taus },
            };
            let target = target_for(target.as_deref(), &s)?;
            Ok((commands::cmd_sweep(&s, &axes, &target, jobs.max(1), &common.out)?, common.out))
        }
        Command::Optimize {
            common,
            target,
            budget,
            replicates,
            signs,
            weights,
        } => {
            let s = common.resolve()?;
            let mut config = OptimizerConfig {
                budget,
                replicates,
                ..OptimizerConfig::default()
            };
            if !signs.is_empty() {
                config.signs = signs.into_iter().map(sign_of).collect::<cnsim::Result<_>>()?;
            }
            if !weights.is_empty() {
                config.weights = weights;
            }
            let target = target_for(target.as_deref(), &s)?;
            Ok((commands::cmd_optimize(&s, &target, &config, &common.out)?, common.out))
        }
        Command::Report {
            common,
            network,
            nodes,
            target,
        } => {
            let s = common.resolve()?;
            let target = target_for(target.as_deref(), &s)?;
            Ok((commands::cmd_report(&network, nodes, &s, &target, &common.out)?, common.out))
        }
    }
}

fn print_summary(manifest: &RunManifest, out: &Path) {
    println!(
        "{}: {} files in {} ({:.2}s, scenario {})",
        manifest.command,
        manifest.outputs.len(),
        out.display(),
        manifest.total_seconds,
        manifest.scenario_hash
    );
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok((manifest, out)) => {
            print_summary(&manifest, &out);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
