//! Assembles the single layer, checks the factorization against the data,
//! and solves the boundary equation from masked data only.

use recon::boundary_integral::{assemble_single_layer, factorization_check, solve_bie, AdjointConvention};
use recon::carleman::GreensBundle;
use recon::cgo::{build_mu, AngularMode, PrescribedSolver};
use recon::discretization::{Potential, PotentialDescriptor};
use recon::dtn::{assemble_dtn, dtn_difference, mask_partial};
use recon::geometry::DomainSpec;
use recon::pipeline::Lab;
use recon::transform::{solve_omega, SolveMode};

fn main() -> recon::Result<()> {
    let lab = Lab::new(&DomainSpec { refinement_level: 1, ..DomainSpec::default() }, 0.15, 0.07)?;
    let ops = &lab.ops;
    let q = Potential::from_descriptor(&PotentialDescriptor::default(), &lab.mesh, std::path::Path::new("."))?;
    let d = dtn_difference(&assemble_dtn(ops, &q)?, &assemble_dtn(ops, &Potential::zero(ops.n()))?)?;
    let tau = 8.0;
    let bundle = GreensBundle::new(ops, &lab.frame, &lab.partition, tau)?;
    let single = assemble_single_layer(&bundle, ops, &lab.partition, AdjointConvention::Weighted);
    let plain = assemble_single_layer(&bundle, ops, &lab.partition, AdjointConvention::PlainTranspose);
    println!("factorization residual {:.2e}", factorization_check(&single, &d, &q, ops, &bundle)?);
    println!("with plain transpose   {:.2e}", factorization_check(&plain, &d, &q, ops, &bundle)?);

    let view = mask_partial(d, ops, &lab.partition);
    let mu = build_mu(&PrescribedSolver::new(ops, &lab.frame, &lab.partition, tau)?, ops, &lab.frame, &lab.cutoffs, &AngularMode::one())?;
    let sol = solve_bie(&single, &view, &mu.harmonic_trace(ops))?;
    let w = ops.trace(&solve_omega(&bundle, ops, &q, &mu, SolveMode::Neumann)?.w);
    let diff: Vec<_> = sol.trace.iter().zip(&w).map(|(a, b)| a - b).collect();
    println!(
        "bie: condition {:.2}, residual {:.1e}, distance to interior trace {:.1e}, {} reads",
        sol.condition,
        sol.residual,
        ops.boundary_norm(&diff) / ops.boundary_norm(&w),
        sol.reads
    );
    Ok(())
}
