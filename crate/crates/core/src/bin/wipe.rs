use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use wipeplan::config::{parse_config, parse_config_str, RunConfig};
use wipeplan::harness::{exit_code, run_subcommand, Subcommand};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Simulate,
    Rollout,
    Evaluate,
    Plan,
    ServeEnv,
}

/// Table-wiping simulator, evaluator and planner.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// rotating_center, covariance_axis or external:<command>
    #[arg(long)]
    policy: Option<String>,
    /// Serve the environment over TCP on this port.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(cli: &Cli) -> wipeplan::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(p) => parse_config(p)?.config,
        None => parse_config_str("")?.config,
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(e) = cli.episodes {
        config.episodes = e;
    }
    if let Some(p) = &cli.policy {
        config.policy = p.clone();
    }
    if let Some(p) = cli.port {
        config.serve.port = Some(p);
    }
    if let Some(o) = &cli.out {
        config.output_dir = o.to_string_lossy().into_owned();
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cmd = match cli.command {
        Command::Simulate => Subcommand::Simulate,
        Command::Rollout => Subcommand::Rollout,
        Command::Evaluate => Subcommand::Evaluate,
        Command::Plan => Subcommand::Plan,
        Command::ServeEnv => Subcommand::ServeEnv,
    };
    let result = load(&cli).and_then(|c| run_subcommand(&c, cmd));
    match result {
        Ok(outcome) => {
            if !outcome.summary.is_empty() {
                println!("{}", outcome.summary);
            }
            for a in &outcome.artifacts {
                eprintln!("wrote {}", a.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
