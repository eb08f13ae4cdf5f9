//! Incident solutions mu and nu: support of their traces and distance to
//! the profile as tau grows.

use recon::cgo::{build_mu, build_nu, AngularMode, PrescribedSolver};
use recon::geometry::DomainSpec;
use recon::pipeline::Lab;

fn main() -> recon::Result<()> {
    let lab = Lab::new(&DomainSpec { refinement_level: 1, ..DomainSpec::default() }, 0.15, 0.07)?;
    let mode: AngularMode = std::env::args().nth(1).unwrap_or_else(|| "cos1".into()).parse()?;
    for tau in [4.0, 8.0, 16.0, 24.0] {
        let plus = PrescribedSolver::new(&lab.ops, &lab.frame, &lab.partition, tau)?;
        let minus = PrescribedSolver::new(&lab.ops, &lab.frame, &lab.partition, -tau)?;
        let mu = build_mu(&plus, &lab.ops, &lab.frame, &lab.cutoffs, &mode)?;
        let nu = build_nu(&minus, &lab.ops, &lab.frame, &lab.cutoffs)?;
        println!(
            "tau {tau:>4} [{mode}]: |mu - h| {:.4}  |nu - h| {:.4}  leaks {:e} {:e}",
            mu.asymptotic_error,
            nu.asymptotic_error,
            mu.leak(&lab.ops, &lab.partition),
            nu.leak(&lab.ops, &lab.partition)
        );
    }
    Ok(())
}
