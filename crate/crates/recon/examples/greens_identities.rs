//! Green's operator identities and norm decay on a small mesh.

use recon::carleman::{greens_properties_report, GreensBundle};
use recon::geometry::DomainSpec;
use recon::pipeline::Lab;

fn main() -> recon::Result<()> {
    let lab = Lab::new(&DomainSpec { refinement_level: 1, ..DomainSpec::default() }, 0.15, 0.07)?;
    println!("{:>5} {:>10} {:>10} {:>10} {:>10} {:>8}", "tau", "L G - I", "adjoint", "trace", "G L - I", "|G|");
    for tau in [4.0, 8.0, 16.0, -8.0] {
        let bundle = GreensBundle::new(&lab.ops, &lab.frame, &lab.partition, tau)?;
        let r = greens_properties_report(&bundle, &lab.mesh, &lab.ops, true, 7);
        println!(
            "{tau:>5} {:>10.1e} {:>10.1e} {:>10.1e} {:>10.1e} {:>8.4}",
            r.right_inverse, r.adjoint, r.trace_support, r.reproduction, r.norm
        );
    }
    Ok(())
}
