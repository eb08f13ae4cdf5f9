//! Trend table over tau: Green's norm, incident and scattering errors.

use recon::pipeline::{sweep, ExperimentConfig, SweepAxis};

fn main() -> recon::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.domain.refinement_level = 1;
    let report = sweep(&cfg, SweepAxis::Tau, std::path::Path::new("."))?;
    println!("{}", report.header.join("  "));
    for row in &report.rows {
        println!("{}", row.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>().join("  "));
    }
    Ok(())
}
