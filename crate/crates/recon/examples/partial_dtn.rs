//! Computes the DtN difference for a Gaussian bump, masks it, and shows
//! that reads outside the masks are refused.

use recon::discretization::{DirichletSolver, Potential, PotentialDescriptor};
use recon::dtn::{alessandrini_check, assemble_dtn, dtn_difference, mask_partial};
use recon::geometry::DomainSpec;
use recon::pipeline::Lab;

fn main() -> recon::Result<()> {
    let lab = Lab::new(&DomainSpec { refinement_level: 1, ..DomainSpec::default() }, 0.15, 0.07)?;
    let q = Potential::from_descriptor(&PotentialDescriptor::default(), &lab.mesh, std::path::Path::new("."))?;
    let zero = Potential::zero(lab.ops.n());
    let d = dtn_difference(&assemble_dtn(&lab.ops, &q)?, &assemble_dtn(&lab.ops, &zero)?)?;

    let err = alessandrini_check(&lab.ops, &d, &DirichletSolver::new(&lab.ops, &zero)?, &DirichletSolver::new(&lab.ops, &q)?, 20, 1);
    println!("alessandrini identity, worst relative error: {err:.2e}");

    let view = mask_partial(d, &lab.ops, &lab.partition);
    let i = view.output_mask.iter().position(|m| *m).unwrap();
    let j = view.input_mask.iter().position(|m| *m).unwrap();
    let k = view.input_mask.iter().position(|m| !m).unwrap();
    println!("D[{i},{j}] = {:.4e}", view.entry(i, j)?);
    match view.entry(i, k) {
        Ok(_) => println!("unexpected read outside B~"),
        Err(e) => println!("refused: {e}"),
    }
    println!("{} reads, {} violations", view.reads(), view.violations());
    Ok(())
}
