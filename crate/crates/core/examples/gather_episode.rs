//! Plays one crumb-gathering episode with the rotating baseline and prints
//! every transition.

use wipeplan::baseline::{Policy, RotatingCenter};
use wipeplan::env::{EnvConfig, TaskKind, WipingEnv};

fn main() -> wipeplan::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let config = EnvConfig::preset(TaskKind::GatherCrumbs);
    let (mut env, mut obs) = WipingEnv::reset(config.clone(), seed)?;
    let mut policy = RotatingCenter;
    println!("seed {seed}: {} dirty pixels at reset", obs.set_count());
    while !env.is_done() {
        let a = policy.act(&obs, env.step_index(), &config.table)?;
        let r = env.step(a)?;
        println!(
            "step {:2}  wipe ({:.2},{:.2}) heading {:+.2} length {:.2}  reward {:+.4}  mean distance {:.4}  off table {}",
            r.info.step, a.px, a.py, a.theta, a.length, r.reward, r.info.mean_center_distance, r.info.off_table_count
        );
        obs = r.observation;
    }
    let left = env
        .cloud()
        .dirty_on_table(&config.table)
        .map(|(x, y)| (x - 0.5).hypot(y - 0.5))
        .fold(0.0, f64::max);
    println!("done after {} wipes; farthest crumb {left:.3} m from the centre", env.step_index());
    Ok(())
}
