//! Builds the ball mesh at a given refinement level and prints its shape.
//!
//! cargo run --release --example ball_mesh -- 2

use recon::geometry::{build_ball_mesh, partition_boundary, DomainSpec};

fn main() -> recon::Result<()> {
    let level = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let spec = DomainSpec { refinement_level: level, ..DomainSpec::default() };
    let mesh = build_ball_mesh(&spec)?;
    let masks = partition_boundary(&mesh, 0.15)?;
    let count = |m: &[bool]| m.iter().filter(|b| **b).count();
    println!("level {level}: {} vertices, {} tets, max edge {:.4}", mesh.n_vertices(), mesh.tets.len(), mesh.max_edge());
    println!("volume {:.5} (ball {:.5})", mesh.volume(), 4.0 * std::f64::consts::PI / 3.0);
    println!(
        "{} boundary nodes: {} in F~, {} in B~",
        mesh.boundary_nodes.len(),
        count(&masks.f_tilde),
        count(&masks.b_tilde)
    );
    Ok(())
}
