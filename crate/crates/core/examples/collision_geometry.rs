//! Forward kinematics, sphere cover and polytope clearance of the bundled
//! 7-joint robot in the kitchen scene.

use wipeplan::robot::{obstacle_residual, self_collision_residuals, sphere_positions, RobotDescription, SceneDescription};

fn main() -> wipeplan::Result<()> {
    let model = RobotDescription::generic_7dof().build()?;
    let scene = SceneDescription::kitchen_table().build()?;
    let x = &model.home_state;
    let fk = model.chain.forward(x);
    for (k, link) in fk.links.iter().enumerate() {
        let t = link.translation;
        println!("link {k}: ({:+.3}, {:+.3}, {:+.3})  orthonormality {:.1e}", t.x, t.y, t.z, link.orthonormality_error());
    }
    let spheres = sphere_positions(&model.chain, &model.cover, x)?;
    let pairs = model.cover.collision_pairs();
    let self_min = self_collision_residuals(&spheres, &pairs).into_iter().fold(f64::INFINITY, f64::min);
    println!("{} spheres, {} self-collision pairs, smallest gap {self_min:.3} m", spheres.len(), pairs.len());
    for (o, ob) in scene.obstacles.iter().enumerate() {
        let worst = spheres
            .iter()
            .map(|s| obstacle_residual(ob, s))
            .collect::<wipeplan::Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        println!("obstacle {o}: {} facets, smallest clearance {worst:+.3} m", ob.b.len());
    }
    Ok(())
}
