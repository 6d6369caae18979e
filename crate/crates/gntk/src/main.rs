use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gntk::config::{self, Experiment, ExperimentConfig};
use gntk::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "gntk", version, about = "Graph NTK experiments under neighborhood sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute kernels, evolve the GP, run oracles and write artifacts.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed (overrides the config's seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a config and its graph and print the resolved settings.
    Check {
        #[command(flatten)]
        source: Source,
    },
}

#[derive(Args)]
struct Source {
    /// JSON config file.
    config: Option<PathBuf>,
    /// Built-in config used instead of a file (`figure1`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
}

const DEFAULT_OUT: &str = "gntk-out";

fn load(source: &Source) -> CliResult<(ExperimentConfig, PathBuf)> {
    match (&source.config, &source.preset) {
        (Some(path), _) => config::load_config(path),
        (None, Some(name)) => Ok((config::preset(name)?, PathBuf::from("."))),
        (None, None) => Err(CliError::InvalidConfig("give a config file or --preset".into())),
    }
}

fn out_dir(exp: &Experiment, base: &Path, cli_out: Option<PathBuf>) -> PathBuf {
    cli_out
        .or_else(|| exp.config.output_dir.as_ref().map(|p| base.join(p)))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { source, out, seed } => {
            let (mut cfg, base) = load(&source)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let exp = config::resolve(cfg, &base)?;
            let dir = out_dir(&exp, &base, out);
            let outcome = gntk::run_with_env_threads(&exp, &dir)?;
            let failed: Vec<&str> = outcome
                .summary
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| c.name.as_str())
                .collect();
            println!("wrote {}", outcome.out_dir.display());
            if failed.is_empty() {
                println!("all invariant checks passed");
            } else {
                println!("failed checks: {}", failed.join(", "));
            }
            Ok(())
        }
        Command::Check { source } => {
            let (cfg, base) = load(&source)?;
            let exp = config::resolve(cfg, &base)?;
            let report = serde_json::json!({
                "valid": true,
                "n_nodes": exp.graph.n_nodes(),
                "n_train": exp.split.n_train(),
                "schemes": exp.schemes.iter().map(|(n, _)| n).collect::<Vec<_>>(),
                "config": exp.config,
            });
            let text = serde_json::to_string_pretty(&report).expect("config serializes");
            // a closed pipe (`| head`) is not an error worth reporting
            let _ = writeln!(std::io::stdout(), "{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
