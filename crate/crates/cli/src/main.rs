use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

mod config;
mod examples;
mod output;
mod pipeline;
mod run;

use config::{ConfigError, Loaded};
use examples::ExampleContext;
use output::Output;

/// Exit code for invalid configuration.
const EXIT_CONFIG: u8 = 2;
/// Exit code when a run completes with a FAIL verdict.
const EXIT_FAIL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "brokenlight", version, about = "Broken light observation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized sampling; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key=value` with a dotted key, applied on top of the config.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trace observation sets for the configured sources.
    Simulate,
    /// Null-convexity report and tameness sweep.
    Audit,
    /// Full reconstruction with ground-truth scoring.
    Reconstruct,
    /// Reproduce a worked example.
    Example { name: ExampleName },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExampleName {
    Intro,
    Distinct,
    Earliest,
}

/// Config for examples: the file when given, otherwise a unit cylinder.
const EXAMPLE_BASE: &str = "[manifold]\nkind = \"minkowski_cylinder\"\n";

enum Failure {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load(cli: &Cli, required: bool) -> Result<Loaded, Failure> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None if required => {
            return Err(Failure::Config(ConfigError(vec![config::Diagnostic {
                line: None,
                key: "--config".into(),
                message: "this subcommand needs a config file".into(),
            }])))
        }
        None => EXAMPLE_BASE.to_string(),
    };
    config::load(&text, &cli.overrides, cli.seed).map_err(Failure::Config)
}

fn execute(cli: &Cli) -> Result<bool, Failure> {
    let required = !matches!(cli.command, Command::Example { .. });
    let loaded = load(cli, required)?;
    let mode = match &cli.command {
        Command::Simulate => "simulate".to_string(),
        Command::Audit => "audit".to_string(),
        Command::Reconstruct => "reconstruct".to_string(),
        Command::Example { name } => format!("example:{name:?}").to_lowercase(),
    };
    if let Some(m) = loaded.config.mode.as_ref().filter(|m| **m != mode) {
        return Err(Failure::Config(ConfigError(vec![config::Diagnostic {
            line: loaded.mode_line,
            key: "mode".into(),
            message: format!("config is for `{m}` but the subcommand is `{mode}`"),
        }])));
    }
    let dir = cli.output.clone().or_else(|| loaded.config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let hash = match &cli.command {
        Command::Example { .. } => config::tagged_hash(&loaded.hash, &mode),
        _ => loaded.hash.clone(),
    };
    let out = Output::new(&dir, &hash)?;
    log::info!("config hash {hash}");
    let pass = match &cli.command {
        Command::Simulate => run::simulate(&loaded, &out)?,
        Command::Audit => run::audit(&loaded, &out)?,
        Command::Reconstruct => pipeline::reconstruct(&loaded, &out)?,
        Command::Example { name } => {
            let ctx = ExampleContext {
                rays: loaded.config.ray_count,
                observe: loaded.config.limits.clone(),
                opts: loaded.config.tolerances.clone(),
                seed: loaded.config.seed,
            };
            match name {
                ExampleName::Intro => examples::intro(&ctx, &out)?,
                ExampleName::Distinct => examples::distinct(&ctx, &out)?,
                ExampleName::Earliest => examples::earliest(&ctx, &out)?,
            }
        }
    };
    Ok(pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(Failure::Config(e)) => {
            eprint!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
