//! Monte-Carlo evaluation of both baselines on both tasks.
//!
//! `cargo run --release --example evaluate_baselines -- 1000`

use wipeplan::baseline::{evaluate_policy, PolicyKind};
use wipeplan::env::{EnvConfig, TaskKind};

fn main() -> wipeplan::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    for task in [TaskKind::GatherCrumbs, TaskKind::CleanSpills] {
        let config = EnvConfig::preset(task);
        for kind in [PolicyKind::RotatingCenter, PolicyKind::CovarianceAxis] {
            let report = evaluate_policy(&config, &kind, episodes, 0)?;
            println!("{task:?} / {}", report.summary(&kind.name()));
        }
    }
    Ok(())
}
