//! Empirical Carleman constants for the conjugated Laplacian and its bar.

use recon::carleman::{assemble_conjugated, carleman_constant, AssemblyMode};
use recon::geometry::DomainSpec;
use recon::pipeline::Lab;

fn main() -> recon::Result<()> {
    let lab = Lab::new(&DomainSpec { refinement_level: 1, ..DomainSpec::default() }, 0.15, 0.07)?;
    for tau in [4.0, 8.0, 16.0, 32.0] {
        let mut line = format!("tau {tau:>4}:");
        for barred in [false, true] {
            let op = assemble_conjugated(&lab.ops, &lab.frame, tau, barred, AssemblyMode::Conjugation)?;
            let c = carleman_constant(&op, &lab.mesh, &lab.ops, &lab.partition, 40, 3)?;
            line += &format!("  {} {c:.3}", if barred { "barred" } else { "plain" });
        }
        println!("{line}");
    }
    Ok(())
}
