//! Configuration, end-to-end reconstruction, the property suite, sweeps and
//! report files.
//!
//! The reconstruction path sees the data only through [`PartialDtnView`].
//! The interior potential lives in [`Oracle`] and is read only to fill
//! entries flagged `oracle: true`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary_integral::{
    assemble_single_layer, equivalence_check, factorization_check, isomorphism_check, solve_bie,
    trace_green_adjoint, AdjointConvention, IsomorphismReport,
};
use crate::carleman::{
    assemble_conjugated, carleman_constant, greens_properties_report, AssemblyMode, GreensBundle, GreensReport,
};
use crate::cgo::{annihilation_residual, build_mu, build_nu, incident_profile, AngularMode, PrescribedSolver};
use crate::discretization::{assemble_operators, DirichletSolver, OperatorSet, Potential, PotentialDescriptor};
use crate::dtn::{
    alessandrini_check, assemble_dtn, conductivity_route, dtn_difference, mask_partial, view_is_quarantined,
    ConductivityDescriptor, PartialDtnView,
};
use crate::error::{ReconError, Result};
use crate::geometry::{
    build_ball_mesh, compute_coordinates, cutoff_functions, partition_boundary, BoundaryPartition, CoordinateFrame,
    CutoffPair, DomainSpec, Mesh, Side,
};
use crate::linalg::{c64, log_log_slope, random_complex, ZERO};
use crate::transform::{
    limit_constant, radon_limit, reference_integral, solve_omega, transform_boundary, transform_volume, RadonLimit,
    SolveMode, TransformSample,
};

/// Environment variable bounding the worker pool.
pub const THREADS_ENV: &str = "RECON_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Exact discrete identities (right inverse, adjoints, factorization).
    pub identity: f64,
    pub trace_support: f64,
    pub bie_residual: f64,
    pub bie_oracle: f64,
    pub consistency: f64,
    pub alessandrini: f64,
    /// Relative error of the final Radon estimate.
    pub radon_relative: f64,
    /// Null-mode estimate as a fraction of the `g ≡ 1` estimate.
    pub symmetry_null: f64,
    /// Spread of Carleman constants across `τ`.
    pub carleman_spread: f64,
    pub norm_slope: [f64; 2],
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-8,
            trace_support: 1e-9,
            bie_residual: 1e-9,
            bie_oracle: 1e-6,
            consistency: 1e-7,
            alessandrini: 1e-9,
            radon_relative: 0.2,
            symmetry_null: 0.05,
            carleman_spread: 3.0,
            norm_slope: [-1.35, -0.65],
        }
    }
}

/// Parameters read only by the property suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSettings {
    pub green_taus: Vec<f64>,
    pub norm_taus: Vec<f64>,
    pub carleman_taus: Vec<f64>,
    pub carleman_samples: usize,
    pub alessandrini_pairs: usize,
    pub factorization_taus: Vec<f64>,
    pub equivalence_tau: f64,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        SuiteSettings {
            green_taus: vec![4.0, 8.0, 16.0],
            norm_taus: vec![4.0, 8.0, 16.0, 32.0],
            carleman_taus: vec![4.0, 8.0, 16.0, 32.0],
            carleman_samples: 100,
            alessandrini_pairs: 50,
            factorization_taus: vec![8.0, 16.0],
            equivalence_tau: 8.0,
        }
    }
}

/// Axis values used by `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub taus: Vec<f64>,
    pub levels: Vec<usize>,
    pub deltas: Vec<f64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings { taus: vec![4.0, 8.0, 16.0, 24.0], levels: vec![0, 1, 2], deltas: vec![0.1, 0.15, 0.25] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    /// Mask margin `δ`.
    pub delta: f64,
    /// Width of the cutoff transition.
    pub band: f64,
    pub taus: Vec<f64>,
    pub modes: Vec<AngularMode>,
    pub potential: PotentialDescriptor,
    /// When set, the data come from this conductivity and `potential` is ignored.
    pub conductivity: Option<ConductivityDescriptor>,
    pub solve_mode: SolveMode,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub suite: SuiteSettings,
    pub sweep: SweepSettings,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            domain: DomainSpec::default(),
            delta: 0.15,
            band: 0.07,
            taus: vec![4.0, 8.0, 16.0, 24.0],
            modes: vec![AngularMode::one(), AngularMode::cos(1), AngularMode::sin(1), AngularMode::cos(2)],
            potential: PotentialDescriptor::default(),
            conductivity: None,
            solve_mode: SolveMode::Neumann,
            seed: 20240917,
            tolerances: Tolerances::default(),
            suite: SuiteSettings::default(),
            sweep: SweepSettings::default(),
            output: None,
        }
    }
}

fn positive_ascending(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(ReconError::Invalid(format!("{name} is empty")));
    }
    if v.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(ReconError::Invalid(format!("{name} must be positive")));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ReconError::Invalid(format!("{name} must be strictly ascending")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        positive_ascending("taus", &self.taus)?;
        if self.modes.is_empty() {
            return Err(ReconError::Invalid("modes is empty".into()));
        }
        if self.delta <= 0.0 {
            return Err(ReconError::MarginNotPositive(self.delta));
        }
        if !(self.band > 0.0 && self.band < self.delta / 2.0) {
            return Err(ReconError::BandTooWide { band: self.band, delta: self.delta });
        }
        let t = &self.tolerances;
        let tols = [
            t.identity,
            t.trace_support,
            t.bie_residual,
            t.bie_oracle,
            t.consistency,
            t.alessandrini,
            t.radon_relative,
            t.symmetry_null,
            t.carleman_spread,
        ];
        if tols.iter().any(|v| !(*v > 0.0)) {
            return Err(ReconError::Invalid("tolerances must be positive".into()));
        }
        if let Some(ConductivityDescriptor::Constant { value }) = &self.conductivity {
            if *value <= 0.0 {
                return Err(ReconError::NonPositiveConductivity(*value));
            }
        }
        Ok(())
    }

    /// Reads a config; returns it with the directory that relative paths resolve against.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }
}

/// Worker pool sized by `RECON_THREADS` (all cores when unset or invalid).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse::<usize>().ok()).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ReconError::Invalid(format!("thread pool: {e}")))
}

/// Mesh, operators and boundary geometry shared by every stage.
pub struct Lab {
    pub spec: DomainSpec,
    pub mesh: Mesh,
    pub ops: OperatorSet,
    pub frame: CoordinateFrame,
    pub partition: BoundaryPartition,
    pub cutoffs: CutoffPair,
}

impl Lab {
    pub fn new(spec: &DomainSpec, delta: f64, band: f64) -> Result<Self> {
        let mesh = build_ball_mesh(spec).map_err(ReconError::at("mesh"))?;
        let ops = assemble_operators(&mesh).map_err(ReconError::at("operators"))?;
        let frame = compute_coordinates(&mesh, spec);
        let partition = partition_boundary(&mesh, delta).map_err(ReconError::at("masks"))?;
        let cutoffs = cutoff_functions(&partition, band).map_err(ReconError::at("cutoffs"))?;
        Ok(Lab { spec: spec.clone(), mesh, ops, frame, partition, cutoffs })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Lab::new(&cfg.domain, cfg.delta, cfg.band)
    }
}

/// Interior knowledge used only by oracle entries.
pub struct Oracle {
    pub q: Potential,
}

/// The potential the data correspond to: the descriptor, or the reduced
/// conductivity potential.
pub fn oracle_potential(cfg: &ExperimentConfig, lab: &Lab, base_dir: &Path) -> Result<Potential> {
    match &cfg.conductivity {
        Some(c) => Ok(Potential::from_values(vec![c64::new(c.schrodinger_potential(), 0.0); lab.ops.n()])),
        None => Potential::from_descriptor(&cfg.potential, &lab.mesh, base_dir),
    }
}

/// Builds `Λ_q − Λ₀` and masks it at once. The full difference does not
/// outlive this call.
pub fn acquire_data(cfg: &ExperimentConfig, lab: &Lab, base_dir: &Path) -> Result<(PartialDtnView, Oracle)> {
    let q = oracle_potential(cfg, lab, base_dir).map_err(ReconError::at("potential"))?;
    let zero = Potential::zero(lab.ops.n());
    let b0 = assemble_dtn(&lab.ops, &zero).map_err(ReconError::at("dtn"))?;
    let bq = match &cfg.conductivity {
        Some(c) => conductivity_route(&lab.mesh, &lab.ops, &c.nodal(&lab.mesh), &c.boundary_flux(&lab.mesh)),
        None => assemble_dtn(&lab.ops, &q),
    }
    .map_err(ReconError::at("dtn"))?;
    let d = dtn_difference(&bq, &b0).map_err(ReconError::at("dtn"))?;
    Ok((mask_partial(d, &lab.ops, &lab.partition), Oracle { q }))
}

/// One named pass/fail entry. `passed == None` means too little data.
#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub name: String,
    /// The property under test, in words.
    pub property: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: Option<bool>,
    /// Reads interior knowledge of `q`.
    pub oracle: bool,
}

impl CheckEntry {
    fn below(name: impl Into<String>, property: &str, measured: f64, threshold: f64, oracle: bool) -> Self {
        CheckEntry {
            name: name.into(),
            property: property.into(),
            measured,
            threshold,
            passed: Some(measured < threshold),
            oracle,
        }
    }

    fn above(name: impl Into<String>, property: &str, measured: f64, threshold: f64, oracle: bool) -> Self {
        CheckEntry { passed: Some(measured > threshold), ..CheckEntry::below(name, property, measured, threshold, oracle) }
    }

    fn flag(name: impl Into<String>, property: &str, ok: bool, oracle: bool) -> Self {
        CheckEntry {
            passed: Some(ok),
            ..CheckEntry::below(name, property, if ok { 1.0 } else { 0.0 }, 1.0, oracle)
        }
    }

    fn insufficient(name: impl Into<String>, property: &str, oracle: bool) -> Self {
        CheckEntry { passed: None, ..CheckEntry::below(name, property, f64::NAN, f64::NAN, oracle) }
    }
}

/// True when every non-oracle check passed (insufficient data is not a failure).
pub fn non_oracle_pass(checks: &[CheckEntry]) -> bool {
    checks.iter().filter(|c| !c.oracle).all(|c| c.passed != Some(false))
}

#[derive(Debug, Clone, Serialize)]
pub struct BieEntry {
    pub tau: f64,
    pub mode: AngularMode,
    pub condition: f64,
    pub residual: f64,
    /// Relative `M∂` distance to the trace of the interior scattering solution.
    pub oracle_error: f64,
    pub reads: usize,
}

/// Everything produced for one `(τ, mode)` pair.
#[derive(Debug, Clone)]
pub struct ModeRun {
    pub sample: TransformSample,
    pub bie: BieEntry,
    /// Solution trace `tr(w_τ)` from the boundary equation.
    pub trace: Vec<c64>,
    /// `‖μ_τ − h‖_M` and `‖ω_τ − h‖_M`.
    pub mu_error: f64,
    pub omega_error: f64,
    pub mu_leak: f64,
}

#[derive(Debug, Clone)]
pub struct TauRun {
    pub tau: f64,
    pub modes: Vec<ModeRun>,
    pub nu_leak: f64,
}

fn reconstruct_tau(
    cfg: &ExperimentConfig,
    lab: &Lab,
    view: &PartialDtnView,
    oracle: &Oracle,
    tau: f64,
) -> Result<TauRun> {
    let ops = &lab.ops;
    let bundle = GreensBundle::new(ops, &lab.frame, &lab.partition, tau).map_err(ReconError::at("greens"))?;
    let plus = PrescribedSolver::new(ops, &lab.frame, &lab.partition, tau).map_err(ReconError::at("cgo"))?;
    let minus = PrescribedSolver::new(ops, &lab.frame, &lab.partition, -tau).map_err(ReconError::at("cgo"))?;
    let nu = build_nu(&minus, ops, &lab.frame, &lab.cutoffs).map_err(ReconError::at("cgo"))?;
    let nu_trace = nu.harmonic_trace(ops);
    let single = assemble_single_layer(&bundle, ops, &lab.partition, AdjointConvention::Weighted);
    let mut modes = Vec::with_capacity(cfg.modes.len());
    for mode in &cfg.modes {
        let mu = build_mu(&plus, ops, &lab.frame, &lab.cutoffs, mode).map_err(ReconError::at("cgo"))?;
        let u_trace = mu.harmonic_trace(ops);
        // Reconstruction proper: masked data, incident traces and S_τ only.
        let bie = solve_bie(&single, view, &u_trace).map_err(ReconError::at("bie"))?;
        let t_boundary = transform_boundary(&nu_trace, view, &bie.trace).map_err(ReconError::at("transform"))?;

        // Oracle side.
        let omega = solve_omega(&bundle, ops, &oracle.q, &mu, cfg.solve_mode).map_err(ReconError::at("scattering"))?;
        let w_trace = ops.trace(&omega.w);
        let diff: Vec<c64> = bie.trace.iter().zip(&w_trace).map(|(a, b)| a - b).collect();
        let oracle_error = ops.boundary_norm(&diff) / ops.boundary_norm(&w_trace).max(f64::MIN_POSITIVE);
        let od: Vec<c64> = omega.omega.iter().zip(&mu.profile).map(|(a, b)| a - b).collect();
        modes.push(ModeRun {
            sample: TransformSample {
                tau,
                mode: mode.clone(),
                t_volume: transform_volume(ops, &nu, &oracle.q, &omega),
                t_boundary,
                oracle: reference_integral(ops, &lab.frame, &oracle.q, mode),
                limit_constant: limit_constant(lab.frame.dimension),
            },
            bie: BieEntry {
                tau,
                mode: mode.clone(),
                condition: bie.condition,
                residual: bie.residual,
                oracle_error,
                reads: bie.reads,
            },
            trace: bie.trace,
            mu_error: mu.asymptotic_error,
            omega_error: ops.mass_norm(&od),
            mu_leak: mu.leak(ops, &lab.partition),
        });
    }
    Ok(TauRun { tau, modes, nu_leak: nu.leak(ops, &lab.partition) })
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeLimit {
    pub mode: AngularMode,
    pub limit: RadonLimit,
    pub mu_errors: Vec<f64>,
    pub omega_errors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionReport {
    pub seed: u64,
    pub n_vertices: usize,
    pub n_boundary: usize,
    pub taus: Vec<f64>,
    pub samples: Vec<TransformSample>,
    pub bie: Vec<BieEntry>,
    pub limits: Vec<ModeLimit>,
    pub view_reads: usize,
    pub view_violations: usize,
    pub checks: Vec<CheckEntry>,
    #[serde(skip)]
    pub traces: Vec<(f64, AngularMode, Vec<c64>)>,
    #[serde(skip)]
    pub boundary_vertices: Vec<usize>,
}

impl ReconstructionReport {
    pub fn passed(&self) -> bool {
        non_oracle_pass(&self.checks)
    }

    pub fn estimate(&self, mode: &AngularMode) -> Option<c64> {
        self.limits.iter().find(|l| &l.mode == mode).map(|l| l.limit.estimate)
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn radon_checks(cfg: &ExperimentConfig, limits: &[ModeLimit]) -> Vec<CheckEntry> {
    let tol = &cfg.tolerances;
    let scale = limits.iter().map(|l| l.limit.oracle.norm()).fold(0.0f64, f64::max);
    let reference = limits
        .iter()
        .find(|l| l.mode == AngularMode::one())
        .map(|l| l.limit.estimate.norm())
        .unwrap_or_else(|| limits.iter().map(|l| l.limit.estimate.norm()).fold(0.0, f64::max));
    let mut out = Vec::new();
    for l in limits {
        let name = |what: &str| format!("radon {what} [{}]", l.mode);
        if scale == 0.0 {
            out.push(CheckEntry::below(name("zero"), "vanishing potential gives vanishing transform", l.limit.estimate.norm(), 1e-12, true));
        } else if l.limit.oracle.norm() <= 1e-9 * scale {
            let ratio = l.limit.estimate.norm() / reference.max(f64::MIN_POSITIVE);
            out.push(CheckEntry::below(name("symmetry null"), "angular integral vanishes by symmetry", ratio, tol.symmetry_null, true));
        } else {
            out.push(CheckEntry::below(name("relative error"), "large-tau limit recovers the angular integral", l.limit.relative_error, tol.radon_relative, true));
            out.push(CheckEntry::flag(name("error decreasing"), "error against the integral decreases in tau", l.limit.strictly_decreasing, true));
        }
    }
    out
}

/// Mesh, data, then per `τ`: Green's bundle, incident solutions, single
/// layer, boundary solve and transform; finally the limits per mode.
pub fn run_reconstruction(cfg: &ExperimentConfig, base_dir: &Path) -> Result<ReconstructionReport> {
    cfg.validate()?;
    let lab = Lab::from_config(cfg)?;
    let (view, oracle) = acquire_data(cfg, &lab, base_dir)?;
    run_reconstruction_with(cfg, &lab, &view, &oracle)
}

/// As [`run_reconstruction`] on an existing lab and data view.
pub fn run_reconstruction_with(
    cfg: &ExperimentConfig,
    lab: &Lab,
    view: &PartialDtnView,
    oracle: &Oracle,
) -> Result<ReconstructionReport> {
    let pool = worker_pool()?;
    let runs: Vec<TauRun> = pool.install(|| {
        cfg.taus
            .par_iter()
            .map(|&tau| reconstruct_tau(cfg, lab, view, oracle, tau))
            .collect::<Result<Vec<_>>>()
    })?;
    let tol = &cfg.tolerances;
    let mut checks = Vec::new();
    checks.push(CheckEntry::flag("view quarantined", "reconstruction reads masked data only", view_is_quarantined(view), false));
    checks.push(CheckEntry::below("mask violations", "no read outside F~ x B~", view.violations() as f64, 0.5, false));
    let mut samples = Vec::new();
    let mut bie = Vec::new();
    let mut traces = Vec::new();
    for run in &runs {
        checks.push(CheckEntry::below(format!("nu trace support [tau {}]", run.tau), "trace of nu vanishes off F~", run.nu_leak, 1e-300, false));
        for m in &run.modes {
            let tag = format!("[tau {}, {}]", run.tau, m.sample.mode);
            checks.push(CheckEntry::below(format!("mu trace support {tag}"), "trace of mu vanishes off B~", m.mu_leak, 1e-300, false));
            checks.push(CheckEntry::below(format!("bie residual {tag}"), "boundary equation fixed point", m.bie.residual, tol.bie_residual, false));
            checks.push(CheckEntry::below(format!("bie condition {tag}"), "boundary equation well posed at this tau", m.bie.condition, crate::boundary_integral::MAX_CONDITION, false));
            checks.push(CheckEntry::below(format!("bie vs interior {tag}"), "boundary solution equals trace of scattering solution", m.bie.oracle_error, tol.bie_oracle, true));
            if m.sample.t_volume.norm() > 1e-12 {
                checks.push(CheckEntry::below(format!("transform consistency {tag}"), "volume and boundary transforms agree", m.sample.consistency(), tol.consistency, true));
            }
            samples.push(m.sample.clone());
            bie.push(m.bie.clone());
            traces.push((run.tau, m.sample.mode.clone(), m.trace.clone()));
        }
    }
    let mut limits = Vec::new();
    for (k, mode) in cfg.modes.iter().enumerate() {
        let per: Vec<TransformSample> = runs.iter().map(|r| r.modes[k].sample.clone()).collect();
        let mu_errors: Vec<f64> = runs.iter().map(|r| r.modes[k].mu_error).collect();
        let omega_errors: Vec<f64> = runs.iter().map(|r| r.modes[k].omega_error).collect();
        if per.len() < 2 {
            checks.push(CheckEntry::insufficient(format!("radon [{mode}]"), "large-tau limit recovers the angular integral", true));
            continue;
        }
        limits.push(ModeLimit { mode: mode.clone(), limit: radon_limit(&per)?, mu_errors, omega_errors });
    }
    checks.extend(radon_checks(cfg, &limits));
    Ok(ReconstructionReport {
        seed: cfg.seed,
        n_vertices: lab.ops.n(),
        n_boundary: lab.ops.n_boundary(),
        taus: cfg.taus.clone(),
        samples,
        bie,
        limits,
        view_reads: view.reads(),
        view_violations: view.violations(),
        checks,
        traces,
        boundary_vertices: lab.ops.boundary.clone(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(value)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

/// `transform.csv`, `bie_report.json`, `bie_traces.csv`, `report.json` and `plot_trends.py`.
pub fn write_reconstruction(report: &ReconstructionReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("transform.csv"))?;
    w.write_record([
        "tau", "mode", "t_vol_re", "t_vol_im", "t_bdy_re", "t_bdy_im", "estimate_re", "estimate_im", "oracle_re",
        "oracle_im", "abs_err",
    ])?;
    for s in &report.samples {
        let e = s.estimate();
        w.write_record([
            s.tau.to_string(),
            s.mode.to_string(),
            num(s.t_volume.re),
            num(s.t_volume.im),
            num(s.t_boundary.re),
            num(s.t_boundary.im),
            num(e.re),
            num(e.im),
            num(s.oracle.re),
            num(s.oracle.im),
            num((e - s.oracle).norm()),
        ])?;
    }
    w.flush()?;
    write_json(&dir.join("bie_report.json"), &report.bie)?;
    let mut w = csv::Writer::from_path(dir.join("bie_traces.csv"))?;
    w.write_record(["tau", "mode", "vertex", "re", "im"])?;
    for (tau, mode, trace) in &report.traces {
        for (b, v) in trace.iter().enumerate() {
            w.write_record([tau.to_string(), mode.to_string(), report.boundary_vertices[b].to_string(), num(v.re), num(v.im)])?;
        }
    }
    w.flush()?;
    write_json(&dir.join("report.json"), report)?;
    write_plot_script(dir)?;
    Ok(())
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Trend figures from the CSV files next to this script."""
import csv
import os
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))


def rows(name):
    path = os.path.join(here, name)
    if not os.path.exists(path):
        return []
    with open(path) as f:
        return list(csv.DictReader(f))


series = defaultdict(list)
for r in rows("transform.csv"):
    series[r["mode"]].append((float(r["tau"]), float(r["abs_err"])))
if series:
    fig, ax = plt.subplots()
    for mode, pts in sorted(series.items()):
        pts.sort()
        ax.loglog([p[0] for p in pts], [max(p[1], 1e-16) for p in pts], "o-", label=mode)
    ax.set_xlabel("tau")
    ax.set_ylabel("|2i t - integral|")
    ax.legend()
    fig.savefig(os.path.join(here, "radon_error.png"), dpi=120)

norms = rows("carleman_norms.csv")
if norms:
    fig, ax = plt.subplots()
    ax.loglog([float(r["tau"]) for r in norms], [float(r["norm"]) for r in norms], "o-")
    ax.set_xlabel("tau")
    ax.set_ylabel("||G_tau||_M")
    fig.savefig(os.path.join(here, "green_norm.png"), dpi=120)

for name in sys.argv[1:] or [n for n in os.listdir(here) if n.startswith("sweep_") and n.endswith(".csv")]:
    data = rows(name)
    if not data:
        continue
    axis = list(data[0].keys())[0]
    fig, ax = plt.subplots()
    xs = [float(r[axis]) for r in data]
    for col in list(data[0].keys())[1:]:
        ys = [abs(float(r[col])) for r in data]
        if all(y > 0 for y in ys):
            ax.semilogy(xs, ys, "o-", label=col)
    ax.set_xlabel(axis)
    ax.legend(fontsize=7)
    fig.savefig(os.path.join(here, name.replace(".csv", ".png")), dpi=120)
"#;

pub fn write_plot_script(dir: &Path) -> Result<PathBuf> {
    let path = dir.join("plot_trends.py");
    fs::write(&path, PLOT_SCRIPT)?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlemanEntry {
    pub tau: f64,
    pub constant: f64,
    pub constant_barred: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub greens: Vec<GreensReport>,
    pub norms: Vec<(f64, f64)>,
    pub norm_slope: Option<f64>,
    pub carleman: Vec<CarlemanEntry>,
    pub isomorphism: Vec<IsomorphismReport>,
    pub reconstruction: Option<ReconstructionReport>,
    pub checks: Vec<CheckEntry>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        non_oracle_pass(&self.checks)
    }
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(0.0f64, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

/// Green's operator identities at each `τ`.
pub fn greens_checks(lab: &Lab, taus: &[f64], tol: &Tolerances, seed: u64) -> Result<(Vec<GreensReport>, Vec<CheckEntry>)> {
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    for &tau in taus {
        let bundle = GreensBundle::new(&lab.ops, &lab.frame, &lab.partition, tau)?;
        let r = greens_properties_report(&bundle, &lab.mesh, &lab.ops, false, seed);
        let t = format!("[tau {tau}]");
        checks.push(CheckEntry::below(format!("right inverse {t}"), "L G f = f in the interior", r.right_inverse, tol.identity, false));
        checks.push(CheckEntry::below(format!("trace support {t}"), "trace of G f vanishes on the fixed half", r.trace_support, tol.trace_support, false));
        checks.push(CheckEntry::below(format!("adjoint {t}"), "adjoint of G is the barred operator at -tau", r.adjoint, tol.identity, false));
        checks.push(CheckEntry::below(format!("reproduction {t}"), "G L v = v for v flat at the fixed half", r.reproduction, tol.identity, false));
        checks.push(CheckEntry::below(format!("projector {t}"), "projection is idempotent and self-adjoint", r.projector_idempotent.max(r.projector_self_adjoint), tol.identity, false));
        checks.push(CheckEntry::below(format!("T adjoint {t}"), "adjoint of T is the barred T at -tau", r.t_adjoint, tol.identity, false));
        reports.push(r);
    }
    Ok((reports, checks))
}

/// `‖G_τ‖_M` over `taus` and the log-log slope check.
pub fn norm_decay(lab: &Lab, taus: &[f64], tol: &Tolerances, seed: u64) -> Result<(Vec<(f64, f64)>, Option<f64>, CheckEntry)> {
    let norms = taus
        .iter()
        .map(|&tau| Ok((tau, GreensBundle::new(&lab.ops, &lab.frame, &lab.partition, tau)?.norm(&lab.ops, seed))))
        .collect::<Result<Vec<_>>>()?;
    let slope = log_log_slope(&norms.iter().map(|p| p.0).collect::<Vec<_>>(), &norms.iter().map(|p| p.1).collect::<Vec<_>>());
    let property = "norm of G decays like 1/tau";
    let check = match slope {
        Some(s) if taus.len() >= 2 => CheckEntry {
            passed: Some(s >= tol.norm_slope[0] && s <= tol.norm_slope[1]),
            ..CheckEntry::below("norm slope", property, s, tol.norm_slope[1], false)
        },
        _ => CheckEntry::insufficient("norm slope", property, false),
    };
    Ok((norms, slope, check))
}

/// Worst Carleman ratio per `τ` for `L_τ` and `L̄_τ`.
pub fn carleman_constants(lab: &Lab, taus: &[f64], samples: usize, seed: u64) -> Result<Vec<CarlemanEntry>> {
    taus.iter()
        .map(|&tau| {
            let op = assemble_conjugated(&lab.ops, &lab.frame, tau, false, AssemblyMode::Conjugation)?;
            let opb = assemble_conjugated(&lab.ops, &lab.frame, tau, true, AssemblyMode::Conjugation)?;
            Ok(CarlemanEntry {
                tau,
                constant: carleman_constant(&op, &lab.mesh, &lab.ops, &lab.partition, samples, seed)?,
                constant_barred: carleman_constant(&opb, &lab.mesh, &lab.ops, &lab.partition, samples, seed)?,
            })
        })
        .collect()
}

/// Runs every module invariant and the reconstruction, each as a report entry.
pub fn run_property_suite(cfg: &ExperimentConfig, base_dir: &Path) -> Result<SuiteReport> {
    cfg.validate()?;
    let lab = Lab::from_config(cfg)?;
    let tol = &cfg.tolerances;
    let s = &cfg.suite;
    let mut checks = Vec::new();

    let (greens, c) = greens_checks(&lab, &s.green_taus, tol, cfg.seed)?;
    checks.extend(c);

    let (norms, norm_slope, c) = norm_decay(&lab, &s.norm_taus, tol, cfg.seed)?;
    checks.push(c);

    let carleman = carleman_constants(&lab, &s.carleman_taus, s.carleman_samples, cfg.seed)?;
    if carleman.len() >= 2 {
        let a = spread(&carleman.iter().map(|e| e.constant).collect::<Vec<_>>());
        let b = spread(&carleman.iter().map(|e| e.constant_barred).collect::<Vec<_>>());
        checks.push(CheckEntry::below("carleman uniformity", "Carleman constant does not grow with tau", a, tol.carleman_spread, false));
        checks.push(CheckEntry::below("carleman uniformity barred", "Carleman constant does not grow with tau", b, tol.carleman_spread, false));
    } else {
        checks.push(CheckEntry::insufficient("carleman uniformity", "Carleman constant does not grow with tau", false));
    }

    let q = oracle_potential(cfg, &lab, base_dir)?;
    let zero = Potential::zero(lab.ops.n());
    let b0 = assemble_dtn(&lab.ops, &zero)?;
    let bq = assemble_dtn(&lab.ops, &q)?;
    let d = dtn_difference(&bq, &b0)?;
    let alles = alessandrini_check(&lab.ops, &d, &DirichletSolver::new(&lab.ops, &zero)?, &DirichletSolver::new(&lab.ops, &q)?, s.alessandrini_pairs, cfg.seed);
    checks.push(CheckEntry::below("alessandrini", "data pairing equals the volume integral", alles, tol.alessandrini, true));

    let mut isomorphism = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for &tau in &s.factorization_taus {
        let bundle = GreensBundle::new(&lab.ops, &lab.frame, &lab.partition, tau)?;
        let single = assemble_single_layer(&bundle, &lab.ops, &lab.partition, AdjointConvention::Weighted);
        let plain = assemble_single_layer(&bundle, &lab.ops, &lab.partition, AdjointConvention::PlainTranspose);
        let t = format!("[tau {tau}]");
        let f = factorization_check(&single, &d, &q, &lab.ops, &bundle)?;
        checks.push(CheckEntry::below(format!("factorization {t}"), "single layer times data equals trace of weighted G q P_q", f, tol.identity, true));
        let fp = factorization_check(&plain, &d, &q, &lab.ops, &bundle)?;
        checks.push(CheckEntry::above(format!("factorization negative control {t}"), "unweighted adjoint breaks the identity", fp, 1e-2, true));
        checks.extend(single_layer_checks(&lab, &bundle, &single, &mut rng, tau));
        if tau == s.equivalence_tau {
            let f = random_complex(&mut rng, lab.ops.n_boundary());
            let e = equivalence_check(&single, &d, &q, &lab.ops, &bundle, &f)?;
            checks.push(CheckEntry::below(format!("equivalence boundary->interior {t}"), "boundary equation solution solves the interior equation", e.boundary_to_interior, tol.identity, true));
            checks.push(CheckEntry::below(format!("equivalence interior->boundary {t}"), "interior equation solution solves the boundary equation", e.interior_to_boundary, tol.identity, true));
        }
        match isomorphism_check(&bundle, &q, &lab.ops, cfg.seed) {
            Ok(r) => {
                checks.push(CheckEntry {
                    passed: Some(r.smallest_singular_value >= r.neumann_bound - 1e-6),
                    ..CheckEntry::below(format!("isomorphism {t}"), "smallest singular value of I - G q obeys the Neumann bound", r.smallest_singular_value, r.neumann_bound, true)
                });
                isomorphism.push(r)
            }
            Err(ReconError::NotContracting { estimate }) => {
                checks.push(CheckEntry::below(format!("isomorphism {t}"), "I - G q is invertible", estimate, 1.0, true))
            }
            Err(e) => return Err(e),
        }
    }
    if s.equivalence_tau > 0.0 && !s.factorization_taus.contains(&s.equivalence_tau) {
        checks.push(CheckEntry::insufficient("equivalence", "boundary and interior equations are equivalent", true));
    }

    let reconstruction = match run_reconstruction(cfg, base_dir) {
        Ok(r) => {
            checks.extend(r.checks.iter().cloned());
            for l in &r.limits {
                let property = "incident solution approaches its profile";
                if l.mu_errors.len() >= 2 {
                    checks.push(CheckEntry::flag(format!("mu asymptotics [{}]", l.mode), property, strictly_decreasing(&l.mu_errors), false));
                    checks.push(CheckEntry::flag(format!("omega asymptotics [{}]", l.mode), property, strictly_decreasing(&l.omega_errors), true));
                } else {
                    checks.push(CheckEntry::insufficient(format!("mu asymptotics [{}]", l.mode), property, false));
                }
            }
            Some(r)
        }
        Err(e) => {
            checks.push(CheckEntry::flag(format!("reconstruction: {e}"), "end-to-end run completes", false, false));
            None
        }
    };

    Ok(SuiteReport { seed: cfg.seed, greens, norms, norm_slope, carleman, isomorphism, reconstruction, checks })
}

/// Support and locality of `S_τ` on random boundary inputs.
fn single_layer_checks(
    lab: &Lab,
    bundle: &GreensBundle,
    single: &crate::boundary_integral::SingleLayer,
    rng: &mut ChaCha8Rng,
    tau: f64,
) -> Vec<CheckEntry> {
    let nb = lab.ops.n_boundary();
    let p = &lab.partition;
    let h = random_complex(rng, nb);
    let sh = single.apply(&h);
    let scale = sh.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let outside = (0..nb).filter(|&b| !p.b_tilde[b]).map(|b| sh[b].norm()).fold(0.0f64, f64::max) / scale;
    let mut h2 = h.clone();
    let noise = random_complex(rng, nb);
    for b in (0..nb).filter(|&b| !p.f_tilde[b]) {
        h2[b] += noise[b];
    }
    let sh2 = single.apply(&h2);
    let locality = (0..nb).map(|b| (sh[b] - sh2[b]).norm()).fold(0.0f64, f64::max) / scale;
    let mut g = random_complex(rng, nb);
    for b in (0..nb).filter(|&b| p.b_tilde_tilde[b]) {
        g[b] = ZERO;
    }
    let inter = trace_green_adjoint(bundle, &lab.ops, &g);
    let inter_max = inter.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let t = format!("[tau {tau}]");
    vec![
        CheckEntry::below(format!("single layer output support {t}"), "output of S lies in B~", outside, 1e-10, false),
        CheckEntry::below(format!("single layer input locality {t}"), "S only depends on input over F~", locality, 1e-10, false),
        CheckEntry::below(format!("trace adjoint support {t}"), "adjoint of tr G kills inputs supported off B~~", inter_max, 1e-10, false),
    ]
}

pub fn write_suite(report: &SuiteReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("suite_report.json"), report)?;
    write_norms_csv(&report.norms, &dir.join("carleman_norms.csv"))?;
    if let Some(r) = &report.reconstruction {
        write_reconstruction(r, dir)?;
    }
    write_plot_script(dir)?;
    Ok(())
}

pub fn write_norms_csv(norms: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["tau", "norm"])?;
    for (t, n) in norms {
        w.write_record([t.to_string(), num(*n)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Tau,
    Refinement,
    Delta,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub checks: Vec<CheckEntry>,
}

impl SweepReport {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn passed(&self) -> bool {
        non_oracle_pass(&self.checks)
    }
}

/// Largest refinement level a sweep accepts.
pub const MAX_SWEEP_LEVEL: usize = 3;

fn final_g1_error(cfg: &ExperimentConfig, lab: &Lab, base_dir: &Path) -> Result<f64> {
    let mut c = cfg.clone();
    c.modes = vec![AngularMode::one()];
    let (view, oracle) = acquire_data(&c, lab, base_dir)?;
    let r = run_reconstruction_with(&c, lab, &view, &oracle)?;
    Ok(r.limits.first().map_or(f64::NAN, |l| l.limit.relative_error))
}

/// Trend table along one axis. Deterministic for a given config.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, base_dir: &Path) -> Result<SweepReport> {
    cfg.validate()?;
    let sw = &cfg.sweep;
    let mut checks = Vec::new();
    let (header, rows): (Vec<&str>, Vec<Vec<f64>>) = match axis {
        SweepAxis::Tau => {
            positive_ascending("sweep taus", &sw.taus)?;
            let lab = Lab::from_config(cfg)?;
            let q = oracle_potential(cfg, &lab, base_dir)?;
            let plus_mode = AngularMode::one();
            let mut rows = Vec::new();
            for &tau in &sw.taus {
                let bundle = GreensBundle::new(&lab.ops, &lab.frame, &lab.partition, tau)?;
                let rp = PrescribedSolver::new(&lab.ops, &lab.frame, &lab.partition, tau)?;
                let mu = build_mu(&rp, &lab.ops, &lab.frame, &lab.cutoffs, &plus_mode)?;
                let om = solve_omega(&bundle, &lab.ops, &q, &mu, cfg.solve_mode)?;
                let od: Vec<c64> = om.omega.iter().zip(&mu.profile).map(|(a, b)| a - b).collect();
                rows.push(vec![
                    tau,
                    bundle.norm(&lab.ops, cfg.seed),
                    bundle.h_norm(&lab.ops, cfg.seed),
                    mu.asymptotic_error,
                    lab.ops.mass_norm(&od),
                    om.contraction,
                ]);
            }
            let mut c = cfg.clone();
            c.taus = sw.taus.clone();
            c.modes = vec![plus_mode];
            let (view, oracle) = acquire_data(&c, &lab, base_dir)?;
            let r = run_reconstruction_with(&c, &lab, &view, &oracle)?;
            let errs: Vec<f64> = r.samples.iter().map(|s| (s.estimate() - s.oracle).norm()).collect();
            for (row, e) in rows.iter_mut().zip(errs) {
                row.push(e);
            }
            let taus: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let norms: Vec<f64> = rows.iter().map(|r| r[1]).collect();
            checks.push(match log_log_slope(&taus, &norms) {
                Some(s) => CheckEntry {
                    passed: Some(s >= cfg.tolerances.norm_slope[0] && s <= cfg.tolerances.norm_slope[1]),
                    ..CheckEntry::below("norm slope", "norm of G decays like 1/tau", s, cfg.tolerances.norm_slope[1], false)
                },
                None => CheckEntry::insufficient("norm slope", "norm of G decays like 1/tau", false),
            });
            (vec!["tau", "green_norm", "h_norm", "mu_error", "omega_error", "contraction", "radon_abs_error"], rows)
        }
        SweepAxis::Refinement => {
            if sw.levels.is_empty() || sw.levels.iter().any(|&l| l > MAX_SWEEP_LEVEL) {
                return Err(ReconError::Invalid(format!("refinement levels must lie in 0..={MAX_SWEEP_LEVEL}")));
            }
            let mut rows = Vec::new();
            for &level in &sw.levels {
                let spec = DomainSpec { refinement_level: level, ..cfg.domain.clone() };
                let lab = Lab::new(&spec, cfg.delta, cfg.band)?;
                let q = oracle_potential(cfg, &lab, base_dir)?;
                let zero = Potential::zero(lab.ops.n());
                let b0 = assemble_dtn(&lab.ops, &zero)?;
                let bq = assemble_dtn(&lab.ops, &q)?;
                let alles = alessandrini_check(
                    &lab.ops,
                    &dtn_difference(&bq, &b0)?,
                    &DirichletSolver::new(&lab.ops, &zero)?,
                    &DirichletSolver::new(&lab.ops, &q)?,
                    cfg.suite.alessandrini_pairs,
                    cfg.seed,
                );
                let profile = incident_profile(&lab.ops, &lab.frame, &AngularMode::one(), Side::Plus);
                let annihilation = annihilation_residual(&lab.ops, &lab.frame, &profile.h);
                let sigma = ConductivityDescriptor::ExpX1 { rate: 1.0 };
                let bs = conductivity_route(&lab.mesh, &lab.ops, &sigma.nodal(&lab.mesh), &sigma.boundary_flux(&lab.mesh))?;
                let qs = Potential::from_values(vec![c64::new(sigma.schrodinger_potential(), 0.0); lab.ops.n()]);
                let bqs = assemble_dtn(&lab.ops, &qs)?;
                let cond = (&bs.matrix - &bqs.matrix).norm_l2() / bqs.matrix.norm_l2();
                rows.push(vec![level as f64, lab.mesh.max_edge(), lab.ops.n() as f64, alles, annihilation, cond]);
            }
            if rows.len() >= 2 {
                let ann: Vec<f64> = rows.iter().map(|r| r[4]).collect();
                let cond: Vec<f64> = rows.iter().map(|r| r[5]).collect();
                let alles = rows.iter().map(|r| r[3]).fold(0.0f64, f64::max);
                checks.push(CheckEntry::below("alessandrini stable", "data pairing identity at every level", alles, cfg.tolerances.alessandrini, true));
                checks.push(CheckEntry::flag("annihilation decreasing", "profile is annihilated in the limit", strictly_decreasing(&ann), false));
                checks.push(CheckEntry::flag("conductivity decreasing", "conductivity route converges to the potential route", strictly_decreasing(&cond), false));
            } else {
                checks.push(CheckEntry::insufficient("refinement trends", "trends under refinement", false));
            }
            (vec!["level", "max_edge", "vertices", "alessandrini", "annihilation", "conductivity_gap"], rows)
        }
        SweepAxis::Delta => {
            positive_ascending("sweep deltas", &sw.deltas)?;
            let mut rows = Vec::new();
            for &delta in &sw.deltas {
                if !(cfg.band < delta / 2.0) {
                    return Err(ReconError::BandTooWide { band: cfg.band, delta });
                }
                let lab = Lab::new(&cfg.domain, delta, cfg.band)?;
                let nb = lab.ops.n_boundary() as f64;
                let ft = lab.partition.f_tilde.iter().filter(|&&m| m).count() as f64 / nb;
                let bt = lab.partition.b_tilde.iter().filter(|&&m| m).count() as f64 / nb;
                let c = ExperimentConfig { delta, ..cfg.clone() };
                rows.push(vec![delta, ft, bt, final_g1_error(&c, &lab, base_dir)?]);
            }
            (vec!["delta", "f_tilde_fraction", "b_tilde_fraction", "radon_relative_error"], rows)
        }
    };
    Ok(SweepReport { axis, header: header.into_iter().map(String::from).collect(), rows, checks })
}

pub fn write_sweep(report: &SweepReport, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let name = match report.axis {
        SweepAxis::Tau => "sweep_tau.csv",
        SweepAxis::Refinement => "sweep_refinement.csv",
        SweepAxis::Delta => "sweep_delta.csv",
    };
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(&report.header)?;
    for row in &report.rows {
        w.write_record(row.iter().map(|v| num(*v)))?;
    }
    w.flush()?;
    write_json(&dir.join(name.replace(".csv", ".json")), report)?;
    write_plot_script(dir)?;
    Ok(path)
}
