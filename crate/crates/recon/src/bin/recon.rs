use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use recon::carleman::GreensBundle;
use recon::cgo::{build_mu, build_nu, PrescribedSolver};
use recon::dtn::{assemble_dtn, export_matrix_csv};
use recon::pipeline::{
    acquire_data, carleman_constants, greens_checks, non_oracle_pass, norm_decay, run_property_suite,
    run_reconstruction, sweep, write_norms_csv, write_plot_script, write_reconstruction, write_suite, write_sweep,
    CheckEntry, ExperimentConfig, Lab, SweepAxis,
};
use recon::{ReconError, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "recon", about = "Radon-type integrals of a potential from partial boundary data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Io {
    /// JSON config; every field has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the ball mesh and write it as JSON.
    Mesh(Io),
    /// Full DtN difference and its masked partial view as CSV.
    Dtn(Io),
    /// Green's operator identities, norm decay and Carleman constants.
    GreensCheck(Io),
    /// Incident solutions for every (tau, mode).
    Cgo(Io),
    /// End-to-end reconstruction.
    Reconstruct(Io),
    /// Trend table along one axis.
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[command(flatten)]
        io: Io,
    },
    /// Every invariant plus the reconstruction.
    Suite(Io),
}

fn load(io: &Io) -> Result<(ExperimentConfig, PathBuf, PathBuf)> {
    let (cfg, base) = match &io.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => (ExperimentConfig::default(), PathBuf::from(".")),
    };
    let out = io.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("recon-out"));
    cfg.validate()?;
    std::fs::create_dir_all(&out)?;
    Ok((cfg, base, out))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn print_checks(checks: &[CheckEntry]) {
    for c in checks {
        let verdict = match c.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "N/A ",
        };
        let tag = if c.oracle { " (oracle)" } else { "" };
        println!("{verdict} {}{tag}: {:.3e} (threshold {:.1e})", c.name, c.measured, c.threshold);
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Mesh(io) => {
            let (cfg, _, out) = load(&io)?;
            let lab = Lab::from_config(&cfg)?;
            lab.mesh.write_json(&out.join("mesh.json"))?;
            println!(
                "{} vertices, {} tets, {} boundary faces, max edge {:.4}",
                lab.mesh.n_vertices(),
                lab.mesh.tets.len(),
                lab.mesh.boundary_faces.len(),
                lab.mesh.max_edge()
            );
            Ok(true)
        }
        Command::Dtn(io) => {
            let (cfg, base, out) = load(&io)?;
            let lab = Lab::from_config(&cfg)?;
            let q = recon::pipeline::oracle_potential(&cfg, &lab, &base)?;
            let bq = assemble_dtn(&lab.ops, &q)?;
            export_matrix_csv(&bq.matrix, &out.join("dtn.csv"))?;
            let (view, _) = acquire_data(&cfg, &lab, &base)?;
            view.export(&out.join("partial_dtn.csv"), &out.join("partial_dtn_mask.json"), &lab.ops.boundary)?;
            println!("{} boundary nodes; DtN written to {}", lab.ops.n_boundary(), out.display());
            Ok(true)
        }
        Command::GreensCheck(io) => {
            let (cfg, _, out) = load(&io)?;
            let lab = Lab::from_config(&cfg)?;
            let tol = &cfg.tolerances;
            let (greens, mut checks) = greens_checks(&lab, &cfg.suite.green_taus, tol, cfg.seed)?;
            let (norms, slope, c) = norm_decay(&lab, &cfg.suite.norm_taus, tol, cfg.seed)?;
            checks.push(c);
            let carleman = carleman_constants(&lab, &cfg.suite.carleman_taus, cfg.suite.carleman_samples, cfg.seed)?;
            #[derive(Serialize)]
            struct Doc<'a> {
                seed: u64,
                greens: &'a [recon::carleman::GreensReport],
                norm_slope: Option<f64>,
                carleman: &'a [recon::pipeline::CarlemanEntry],
                checks: &'a [CheckEntry],
            }
            write_json(
                &out.join("carleman_report.json"),
                &Doc { seed: cfg.seed, greens: &greens, norm_slope: slope, carleman: &carleman, checks: &checks },
            )?;
            write_norms_csv(&norms, &out.join("carleman_norms.csv"))?;
            write_plot_script(&out)?;
            print_checks(&checks);
            Ok(non_oracle_pass(&checks))
        }
        Command::Cgo(io) => {
            let (cfg, base, out) = load(&io)?;
            let lab = Lab::from_config(&cfg)?;
            let q = recon::pipeline::oracle_potential(&cfg, &lab, &base)?;
            let ops = &lab.ops;
            let mut w = csv::Writer::from_path(out.join("cgo.csv"))?;
            w.write_record(["tau", "mode", "vertex", "mu_re", "mu_im", "profile_re", "profile_im", "omega_re", "omega_im"])?;
            #[derive(Serialize)]
            struct Row {
                tau: f64,
                mode: String,
                mu_error: f64,
                omega_error: f64,
                mu_leak: f64,
                nu_leak: f64,
                neumann_iterations: usize,
            }
            let mut rows = Vec::new();
            for &tau in &cfg.taus {
                let bundle = GreensBundle::new(ops, &lab.frame, &lab.partition, tau)?;
                let rp = PrescribedSolver::new(ops, &lab.frame, &lab.partition, tau)?;
                let rm = PrescribedSolver::new(ops, &lab.frame, &lab.partition, -tau)?;
                let nu = build_nu(&rm, ops, &lab.frame, &lab.cutoffs)?;
                for mode in &cfg.modes {
                    let mu = build_mu(&rp, ops, &lab.frame, &lab.cutoffs, mode)?;
                    let om = recon::transform::solve_omega(&bundle, ops, &q, &mu, cfg.solve_mode)?;
                    for v in 0..ops.n() {
                        let (a, b, c) = (mu.field[v], mu.profile[v], om.omega[v]);
                        w.write_record([
                            tau.to_string(),
                            mode.to_string(),
                            v.to_string(),
                            format!("{:e}", a.re),
                            format!("{:e}", a.im),
                            format!("{:e}", b.re),
                            format!("{:e}", b.im),
                            format!("{:e}", c.re),
                            format!("{:e}", c.im),
                        ])?;
                    }
                    let od: Vec<_> = om.omega.iter().zip(&mu.profile).map(|(a, b)| a - b).collect();
                    rows.push(Row {
                        tau,
                        mode: mode.to_string(),
                        mu_error: mu.asymptotic_error,
                        omega_error: ops.mass_norm(&od),
                        mu_leak: mu.leak(ops, &lab.partition),
                        nu_leak: nu.leak(ops, &lab.partition),
                        neumann_iterations: om.iterations,
                    });
                }
            }
            w.flush()?;
            write_json(&out.join("cgo_report.json"), &rows)?;
            let ok = rows.iter().all(|r| r.mu_leak == 0.0 && r.nu_leak == 0.0);
            for r in &rows {
                println!("tau {:>5} {:>6}: |mu - h| {:.4e}  |omega - h| {:.4e}", r.tau, r.mode, r.mu_error, r.omega_error);
            }
            Ok(ok)
        }
        Command::Reconstruct(io) => {
            let (cfg, base, out) = load(&io)?;
            let report = run_reconstruction(&cfg, &base)?;
            write_reconstruction(&report, &out)?;
            for l in &report.limits {
                println!(
                    "{:>6}: estimate {:.6} {:+.6}i, integral {:.6} {:+.6}i",
                    l.mode.to_string(),
                    l.limit.estimate.re,
                    l.limit.estimate.im,
                    l.limit.oracle.re,
                    l.limit.oracle.im
                );
            }
            print_checks(&report.checks);
            Ok(report.passed())
        }
        Command::Sweep { axis, io } => {
            let (cfg, base, out) = load(&io)?;
            let report = sweep(&cfg, axis, &base)?;
            let path = write_sweep(&report, &out)?;
            println!("{}", report.header.join("  "));
            for row in &report.rows {
                println!("{}", row.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>().join("  "));
            }
            print_checks(&report.checks);
            println!("written to {}", path.display());
            Ok(report.passed())
        }
        Command::Suite(io) => {
            let (cfg, base, out) = load(&io)?;
            let report = run_property_suite(&cfg, &base)?;
            write_suite(&report, &out)?;
            print_checks(&report.checks);
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if matches!(e, ReconError::Invalid(_) | ReconError::Json(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
