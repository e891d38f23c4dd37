//! Library equivalent of the `wipe` binary: load a JSON run configuration and
//! run one subcommand.
//!
//! `cargo run --example run_config -- configs/push_only.json simulate`

use wipeplan::config::parse_config;
use wipeplan::harness::{run_subcommand, Subcommand};

fn main() -> wipeplan::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "configs/gather_crumbs.json".into());
    let cmd: Subcommand = args.next().as_deref().unwrap_or("evaluate").parse()?;
    let parsed = parse_config(path.as_ref())?;
    for key in &parsed.unknown_keys {
        eprintln!("ignoring unknown key {key}");
    }
    println!("config hash {}", parsed.config.hash());
    let outcome = run_subcommand(&parsed.config, cmd)?;
    println!("{}", outcome.summary);
    for a in outcome.artifacts.iter().take(5) {
        println!("  {}", a.display());
    }
    if outcome.artifacts.len() > 5 {
        println!("  ... {} more", outcome.artifacts.len() - 5);
    }
    Ok(())
}
