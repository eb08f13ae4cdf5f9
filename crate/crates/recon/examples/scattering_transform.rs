//! Solves omega = mu + G q omega and forms the volume transform t(tau, g),
//! compared with the lumped integral of q g / r.

use recon::carleman::GreensBundle;
use recon::cgo::{build_mu, build_nu, AngularMode, PrescribedSolver};
use recon::discretization::{Potential, PotentialDescriptor};
use recon::geometry::DomainSpec;
use recon::pipeline::Lab;
use recon::transform::{limit_constant, reference_integral, solve_omega, transform_volume, SolveMode};

fn main() -> recon::Result<()> {
    let lab = Lab::new(&DomainSpec { refinement_level: 1, ..DomainSpec::default() }, 0.15, 0.07)?;
    let q = Potential::from_descriptor(&PotentialDescriptor::default(), &lab.mesh, std::path::Path::new("."))?;
    let g = AngularMode::one();
    let exact = reference_integral(&lab.ops, &lab.frame, &q, &g);
    println!("lumped integral of q/r: {:.6}", exact.re);
    for tau in [4.0, 8.0, 16.0, 24.0] {
        let bundle = GreensBundle::new(&lab.ops, &lab.frame, &lab.partition, tau)?;
        let mu = build_mu(&PrescribedSolver::new(&lab.ops, &lab.frame, &lab.partition, tau)?, &lab.ops, &lab.frame, &lab.cutoffs, &g)?;
        let nu = build_nu(&PrescribedSolver::new(&lab.ops, &lab.frame, &lab.partition, -tau)?, &lab.ops, &lab.frame, &lab.cutoffs)?;
        let omega = solve_omega(&bundle, &lab.ops, &q, &mu, SolveMode::Neumann)?;
        let t = transform_volume(&lab.ops, &nu, &q, &omega);
        let est = t / limit_constant(3);
        println!("tau {tau:>4}: {} Neumann steps, estimate {:.6} {:+.2e}i", omega.iterations, est.re, est.im);
    }
    Ok(())
}
