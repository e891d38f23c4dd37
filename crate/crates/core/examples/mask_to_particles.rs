//! Turns a drawn 64x64 mask into a particle cloud, wipes across it and
//! writes the observation and density images.
//!
//! `cargo run --example mask_to_particles -- out_dir`

use std::path::PathBuf;

use wipeplan::env::{render_observation, Observation};
use wipeplan::mask::{cloud_from_mask, density_pgm, dilate, read_mask, write_observation_pgm};
use wipeplan::rng::seeded_rng;
use wipeplan::sde::{simulate_wipe, SdeParams, TableGeometry, WipeAction};

fn main() -> wipeplan::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/mask".into()));
    std::fs::create_dir_all(&out)?;
    let table = TableGeometry::default();

    // A ring-shaped stain.
    let mut drawn = Observation::zeros();
    for i in 0..64 {
        for j in 0..64 {
            let r = ((i as f64 - 40.0).powi(2) + (j as f64 - 28.0).powi(2)).sqrt();
            if (6.0..9.0).contains(&r) {
                drawn.set(i, j, 1.0);
            }
        }
    }
    let mask_path = out.join("mask.pgm");
    write_observation_pgm(&drawn, &mask_path)?;

    let mask = dilate(&read_mask(&mask_path)?, 2);
    let mut rng = seeded_rng(1);
    let mut cloud = cloud_from_mask(&mask, &table, 3000, &mut rng)?;
    println!("mask: {} set pixels, dilated {}, cloud {} particles", drawn.set_count(), mask.set_count(), cloud.len());

    let params = SdeParams { lambda: 2.0, ..SdeParams::default() };
    simulate_wipe(&mut cloud, &WipeAction::new(0.4, 0.44, 0.0, 0.5), &table, &params, &mut rng);
    let after = render_observation(&cloud, &table);
    println!("after one wipe: {} set pixels, {} particles wiped", after.set_count(), cloud.wiped_count());
    write_observation_pgm(&after, &out.join("after.pgm"))?;
    std::fs::write(out.join("density.pgm"), density_pgm(&cloud, &table, 1.5)?)?;
    println!("images in {}", out.display());
    Ok(())
}
