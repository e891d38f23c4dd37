//! Whole-body plan for a wipe with the bundled 7-joint mobile manipulator at
//! the kitchen table, written to `plan.json` when a path is given.

use std::time::Instant;

use wipeplan::config::parse_config_str;
use wipeplan::harness::plan_request;
use wipeplan::trajopt::{plan_wipe, PlanArtifact};

fn main() -> wipeplan::Result<()> {
    let config = parse_config_str(r#"{"plan": {"action": [0.3, 0.3, 0.0, 0.3]}}"#)?.config;
    let request = plan_request(&config)?;
    let t0 = Instant::now();
    let (spec, result) = plan_wipe(&request)?;
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    let artifact = PlanArtifact::new(&spec, &result, &config.hash(), config.seed);
    println!(
        "{:?}: {} knots, cost {:.4e} (from {:.4e}), {} iterations, violation {:.1e}, terminal error {:.1e} m, {ms:.0} ms",
        result.status,
        spec.horizon(),
        result.cost,
        result.initial_cost,
        result.iterations,
        result.max_constraint_violation,
        artifact.terminal_position_error
    );
    for s in artifact.steps.iter().step_by(10) {
        let e = s.ee_position;
        let r = s.reference_position;
        println!(
            "  t {:5.2} {:8?}  tool ({:+.3} {:+.3} {:+.3})  target ({:+.3} {:+.3} {:+.3})",
            s.time, s.phase, e[0], e[1], e[2], r[0], r[1], r[2]
        );
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, serde_json::to_string_pretty(&artifact)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
