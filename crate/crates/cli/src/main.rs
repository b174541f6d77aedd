use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use padlab_cli::config::{parse_config, Experiment, RunConfig};
use padlab_cli::execute;

/// Border-handling experiment runner.
#[derive(Parser)]
#[command(name = "padlab", version, disable_help_subcommand = true)]
struct Cli {
    /// Experiment: probe | pad-compare | stage-sweep | grid-classify |
    /// grid-segment | dist-to-border | ring-region | dimest | reach-map |
    /// report
    experiment: String,
    /// Config file (key = value with [section] headers)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> padlab_core::Result<String> {
    let experiment = Experiment::parse(&cli.experiment)?;
    let text = std::fs::read_to_string(&cli.config).map_err(|e| {
        padlab_core::Error::argument(format!("cannot read {}: {e}", cli.config.display()))
    })?;
    let mut cfg: RunConfig = parse_config(&text, experiment)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    execute(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("padlab: {e}");
            ExitCode::FAILURE
        }
    }
}
