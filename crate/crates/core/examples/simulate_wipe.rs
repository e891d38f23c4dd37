//! One straight wipe through a Gaussian crumb pile, for a few choices of
//! diffusion and absorption.

use wipeplan::rng::seeded_rng;
use wipeplan::sde::{sample_initial_cloud, simulate_wipe, InitialStateSpec, SdeParams, TableGeometry, WipeAction};

fn main() -> wipeplan::Result<()> {
    let table = TableGeometry::default();
    let pile = InitialStateSpec::single([0.35, 0.5], 0.04, 1000);
    let action = WipeAction::new(0.25, 0.5, 0.0, 0.5);

    for (alpha, lambda) in [(0.0, 0.0), (1e-2, 0.0), (1e-2, 2.0), (5e-2, 5.0)] {
        let params = SdeParams { alpha, lambda, ..SdeParams::default() };
        let mut rng = seeded_rng(7);
        let mut cloud = sample_initial_cloud(&pile, &table, &mut rng)?;
        let before_x: f64 = cloud.xs.iter().sum::<f64>() / cloud.len() as f64;
        let trace = simulate_wipe(&mut cloud, &action, &table, &params, &mut rng);
        let dirty: Vec<_> = cloud.dirty().collect();
        let after_x = if dirty.is_empty() {
            "none left".to_string()
        } else {
            format!("{:.3}", dirty.iter().map(|p| p.0).sum::<f64>() / dirty.len() as f64)
        };
        println!(
            "alpha {alpha:<5} lambda {lambda:<3}: {} steps, wiped {:4}/{}, off table {:3}, mean x of dirty {before_x:.3} -> {after_x}",
            trace.len(),
            cloud.wiped_count(),
            cloud.len(),
            cloud.off_table_count(&table),
        );
    }
    Ok(())
}
