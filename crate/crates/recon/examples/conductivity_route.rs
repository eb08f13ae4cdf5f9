//! Data from a conductivity sigma = exp(x1), reduced to a Schrödinger
//! potential and compared with the direct potential DtN per level.

use recon::discretization::Potential;
use recon::dtn::{assemble_dtn, conductivity_route, ConductivityDescriptor};
use recon::geometry::DomainSpec;
use recon::linalg::c64;
use recon::pipeline::Lab;

fn main() -> recon::Result<()> {
    let sigma = ConductivityDescriptor::ExpX1 { rate: 1.0 };
    for level in 0..=2 {
        let lab = Lab::new(&DomainSpec { refinement_level: level, ..DomainSpec::default() }, 0.15, 0.07)?;
        let via_sigma = conductivity_route(&lab.mesh, &lab.ops, &sigma.nodal(&lab.mesh), &sigma.boundary_flux(&lab.mesh))?;
        let q = Potential::from_values(vec![c64::new(sigma.schrodinger_potential(), 0.0); lab.ops.n()]);
        let direct = assemble_dtn(&lab.ops, &q)?;
        let gap = (&via_sigma.matrix - &direct.matrix).norm_l2() / direct.matrix.norm_l2();
        println!("level {level}: max edge {:.3}, relative gap {gap:.4e}", lab.mesh.max_edge());
    }
    Ok(())
}
