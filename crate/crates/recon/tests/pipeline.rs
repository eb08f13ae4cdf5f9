mod common;

use std::path::Path;
use std::process::Command;

use recon::cgo::AngularMode;
use recon::discretization::PotentialDescriptor;
use recon::dtn::ConductivityDescriptor;
use recon::pipeline::*;
use recon::ReconError;

fn small(level: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.domain.refinement_level = level;
    c.taus = vec![4.0, 8.0, 16.0];
    c.modes = vec![AngularMode::one(), AngularMode::sin(1)];
    c
}

#[test]
fn empty_json_is_the_default_config() {
    let c: ExperimentConfig = serde_json::from_str("{}").unwrap();
    assert_eq!(c, ExperimentConfig::default());
    let partial: ExperimentConfig = serde_json::from_str(r#"{"tolerances": {"identity": 1e-6}, "modes": ["cos3"]}"#).unwrap();
    assert_eq!(partial.tolerances.bie_residual, Tolerances::default().bie_residual);
    assert_eq!(partial.modes, vec![AngularMode::cos(3)]);
    let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&partial).unwrap()).unwrap();
    assert_eq!(back, partial);
}

#[test]
fn invalid_configs_are_rejected() {
    let base = ExperimentConfig::default();
    let cases = [
        ExperimentConfig { taus: vec![], ..base.clone() },
        ExperimentConfig { taus: vec![8.0, 4.0], ..base.clone() },
        ExperimentConfig { taus: vec![-1.0, 4.0], ..base.clone() },
        ExperimentConfig { modes: vec![], ..base.clone() },
        ExperimentConfig { band: 0.2, ..base.clone() },
        ExperimentConfig { delta: 0.0, ..base.clone() },
        ExperimentConfig { conductivity: Some(ConductivityDescriptor::Constant { value: -1.0 }), ..base.clone() },
    ];
    for c in cases {
        assert!(c.validate().is_err(), "{c:?}");
    }
    let mut c = base.clone();
    c.domain.center_offset = 0.5;
    assert!(matches!(c.validate(), Err(ReconError::DomainTouchesAxis { .. })));
    assert!(serde_json::from_str::<ExperimentConfig>(r#"{"modes": ["tan2"]}"#).is_err());
}

#[test]
fn zero_potential_reconstructs_zero() {
    let mut c = small(0);
    c.potential = PotentialDescriptor::Constant { value: [0.0, 0.0] };
    let r = run_reconstruction(&c, Path::new(".")).unwrap();
    for l in &r.limits {
        assert!(l.limit.estimate.norm() < 1e-12);
    }
    assert!(r.passed(), "{:?}", r.checks.iter().filter(|c| c.passed == Some(false)).collect::<Vec<_>>());
    assert_eq!(r.view_violations, 0);
}

#[test]
fn unit_conductivity_matches_zero_potential() {
    let mut a = small(0);
    a.potential = PotentialDescriptor::Constant { value: [0.0, 0.0] };
    let mut b = small(0);
    b.conductivity = Some(ConductivityDescriptor::Constant { value: 1.0 });
    let ra = run_reconstruction(&a, Path::new(".")).unwrap();
    let rb = run_reconstruction(&b, Path::new(".")).unwrap();
    for (x, y) in ra.samples.iter().zip(&rb.samples) {
        assert!((x.t_boundary - y.t_boundary).norm() < 1e-10);
    }
}

#[test]
fn reconstruction_estimates_the_integral() {
    let r = run_reconstruction(&small(1), Path::new(".")).unwrap();
    let one = r.limits.iter().find(|l| l.mode == AngularMode::one()).unwrap();
    assert!(one.limit.relative_error < 0.5, "{:?}", one.limit);
    let null = r.estimate(&AngularMode::sin(1)).unwrap();
    assert!(null.norm() < 1e-6 * one.limit.estimate.norm());
    assert!(r.view_reads > 0 && r.view_violations == 0);
    for b in &r.bie {
        assert!(b.residual < 1e-9 && b.oracle_error < 1e-6, "{b:?}");
    }
}

#[test]
fn single_tau_grid_is_insufficient_not_failed() {
    let mut c = small(0);
    c.taus = vec![8.0];
    let r = run_reconstruction(&c, Path::new(".")).unwrap();
    assert!(r.limits.is_empty());
    let radon: Vec<_> = r.checks.iter().filter(|c| c.name.starts_with("radon")).collect();
    assert!(!radon.is_empty() && radon.iter().all(|c| c.passed.is_none()));
    assert!(r.passed());
}

#[test]
fn outputs_are_deterministic() {
    let c = small(0);
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    write_reconstruction(&run_reconstruction(&c, Path::new(".")).unwrap(), d1.path()).unwrap();
    write_reconstruction(&run_reconstruction(&c, Path::new(".")).unwrap(), d2.path()).unwrap();
    for f in ["transform.csv", "bie_traces.csv", "report.json", "bie_report.json", "plot_trends.py"] {
        let a = std::fs::read(d1.path().join(f)).unwrap();
        let b = std::fs::read(d2.path().join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f}");
    }
    let rows = csv::Reader::from_path(d1.path().join("transform.csv")).unwrap().records().count();
    assert_eq!(rows, c.taus.len() * c.modes.len());
}

#[test]
fn reconstruction_code_reads_only_the_view() {
    // Between the two markers, nothing may touch the full difference or the
    // potential.
    let src = include_str!("../src/pipeline.rs");
    let start = src.find("// Reconstruction proper").unwrap();
    let end = src[start..].find("// Oracle side").unwrap() + start;
    let block = &src[start..end];
    for forbidden in ["oracle", "DtnDifference", "assemble_dtn", ".q", "matrix"] {
        assert!(!block.contains(forbidden), "`{forbidden}` in reconstruction block");
    }
    assert!(block.contains("view"));
}

#[test]
fn sweep_tables_have_one_row_per_value() {
    let mut c = small(0);
    c.sweep.levels = vec![0, 1];
    let r = sweep(&c, SweepAxis::Refinement, Path::new(".")).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert!(r.passed(), "{:?}", r.checks);
    let gap = r.column("conductivity_gap").unwrap();
    assert!(gap[1] < gap[0]);
    c.sweep.levels = vec![9];
    assert!(sweep(&c, SweepAxis::Refinement, Path::new(".")).is_err());
}

fn recon() -> Command {
    Command::new(env!("CARGO_BIN_EXE_recon"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn cli_writes_the_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"domain": {"refinement_level": 0}}"#);
    let out = recon().args(["mesh", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).env(THREADS_ENV, "1").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mesh: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("mesh.json")).unwrap()).unwrap();
    assert!(mesh.is_object());
    assert!(String::from_utf8_lossy(&out.stdout).contains("125 vertices"));
}

#[test]
fn cli_rejects_bad_configs_with_a_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"taus": [8, 4]}"#);
    let out = recon().args(["reconstruct", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let cfg = write_config(dir.path(), "{not json");
    let out = recon().args(["suite", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_reconstruct_runs_single_threaded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"domain": {"refinement_level": 0}, "taus": [4, 8], "modes": ["1"], "tolerances": {"radon_relative": 10}}"#);
    let out = recon().args(["reconstruct", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).env(THREADS_ENV, "1").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("transform.csv").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}
