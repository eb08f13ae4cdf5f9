//! Incident CGO-type harmonic functions built on the Carleman machinery.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::carleman::{assemble_conjugated, AssemblyMode, LeastNormSolver};
use crate::discretization::{complex_derivatives, OperatorSet};
use crate::error::{ReconError, Result};
use crate::geometry::{BoundaryPartition, CoordinateFrame, CutoffPair, Side};
use crate::linalg::{c64, ZERO};

/// `g(θ) = c₀ + Σ aₖ cos kθ + Σ bₖ sin kθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularMode {
    pub constant: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl AngularMode {
    pub fn one() -> Self {
        AngularMode { constant: 1.0, cos: vec![], sin: vec![] }
    }

    pub fn cos(k: usize) -> Self {
        let mut c = vec![0.0; k];
        c[k - 1] = 1.0;
        AngularMode { constant: 0.0, cos: c, sin: vec![] }
    }

    pub fn sin(k: usize) -> Self {
        let mut s = vec![0.0; k];
        s[k - 1] = 1.0;
        AngularMode { constant: 0.0, cos: vec![], sin: s }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut g = self.constant;
        for (k, a) in self.cos.iter().enumerate() {
            g += a * ((k + 1) as f64 * theta).cos();
        }
        for (k, b) in self.sin.iter().enumerate() {
            g += b * ((k + 1) as f64 * theta).sin();
        }
        g
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        AngularMode {
            constant: alpha * self.constant,
            cos: self.cos.iter().map(|v| alpha * v).collect(),
            sin: self.sin.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn plus(&self, other: &AngularMode) -> Self {
        let add = |a: &[f64], b: &[f64]| {
            (0..a.len().max(b.len())).map(|k| a.get(k).unwrap_or(&0.0) + b.get(k).unwrap_or(&0.0)).collect()
        };
        AngularMode { constant: self.constant + other.constant, cos: add(&self.cos, &other.cos), sin: add(&self.sin, &other.sin) }
    }

    pub fn max_order(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    /// Odd under `θ → −θ`.
    pub fn is_odd(&self) -> bool {
        self.constant == 0.0 && self.cos.iter().all(|&c| c == 0.0)
    }
}

/// Labels: `1`, `cosK`, `sinK`.
impl FromStr for AngularMode {
    type Err = ReconError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let order = |rest: &str| -> Result<usize> {
            let k = if rest.is_empty() { 1 } else { rest.parse().map_err(|_| ReconError::Invalid(format!("bad mode `{s}`")))? };
            if k == 0 {
                return Err(ReconError::Invalid(format!("mode order must be positive in `{s}`")));
            }
            Ok(k)
        };
        if s == "1" || s == "const" {
            Ok(AngularMode::one())
        } else if let Some(rest) = s.strip_prefix("cos") {
            Ok(AngularMode::cos(order(rest)?))
        } else if let Some(rest) = s.strip_prefix("sin") {
            Ok(AngularMode::sin(order(rest)?))
        } else {
            Err(ReconError::Invalid(format!("unknown angular mode `{s}` (use 1, cosK, sinK)")))
        }
    }
}

impl fmt::Display for AngularMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.constant != 0.0 {
            parts.push(if self.constant == 1.0 { "1".to_string() } else { format!("{}", self.constant) });
        }
        for (k, a) in self.cos.iter().enumerate().filter(|(_, a)| **a != 0.0) {
            parts.push(if *a == 1.0 { format!("cos{}", k + 1) } else { format!("{a}*cos{}", k + 1) });
        }
        for (k, b) in self.sin.iter().enumerate().filter(|(_, b)| **b != 0.0) {
            parts.push(if *b == 1.0 { format!("sin{}", k + 1) } else { format!("{b}*sin{}", k + 1) });
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join("+"))
        }
    }
}

impl Serialize for AngularMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AngularMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone)]
pub struct IncidentProfile {
    /// `(z − z̄)^{−(n−2)/2} g(θ)` nodally.
    pub h: Vec<c64>,
    pub laplacian_h: Vec<c64>,
    pub mode: AngularMode,
    pub side: Side,
}

pub fn incident_profile(ops: &OperatorSet, frame: &CoordinateFrame, mode: &AngularMode, side: Side) -> IncidentProfile {
    let e = -(frame.dimension as f64 - 2.0) / 2.0;
    let h: Vec<c64> = (0..frame.len())
        .map(|v| {
            let zz = frame.z[v] - frame.z[v].conj();
            (zz.ln() * e).exp() * mode.eval(frame.theta[v])
        })
        .collect();
    let laplacian_h = ops.laplacian(&h);
    IncidentProfile { h, laplacian_h, mode: mode.clone(), side }
}

/// `L h = 4∂z̄ h − 2(n−2)/(z − z̄) h`, which annihilates the profile in the continuum.
pub fn first_order_operator(ops: &OperatorSet, frame: &CoordinateFrame, h: &[c64]) -> Vec<c64> {
    let (dzbar, _) = complex_derivatives(ops, frame, h);
    let nd = frame.dimension as f64 - 2.0;
    (0..h.len())
        .map(|v| {
            let zz = frame.z[v] - frame.z[v].conj();
            dzbar[v] * 4.0 - h[v] * (2.0 * nd) / zz
        })
        .collect()
}

/// Interior-only M-norm of `L h`; boundary nodes use one-sided gradient fits.
pub fn annihilation_residual(ops: &OperatorSet, frame: &CoordinateFrame, h: &[c64]) -> f64 {
    let lh = first_order_operator(ops, frame, h);
    ops.interior.iter().map(|&v| ops.mass[v] * lh[v].norm_sqr()).sum::<f64>().sqrt()
}

/// Weights of the product norm `‖u‖²_M + ‖tr u‖²_{|τ|⁻¹γ⁻²M∂}` on the free half.
pub fn product_norm_weights(ops: &OperatorSet, partition: &BoundaryPartition, tau: f64) -> Vec<f64> {
    let mut w = ops.mass.clone();
    for (b, &v) in ops.boundary.iter().enumerate() {
        w[v] += ops.boundary_mass[b] / (tau.abs() * partition.gamma_clamped[b].powi(2));
    }
    w
}

/// Least-norm solver of the prescribed-boundary problem for one sign of `τ`
/// (unbarred operator).
pub struct PrescribedSolver {
    pub tau: f64,
    pub solver: LeastNormSolver,
}

impl PrescribedSolver {
    pub fn new(ops: &OperatorSet, frame: &CoordinateFrame, partition: &BoundaryPartition, tau: f64) -> Result<Self> {
        let op = assemble_conjugated(ops, frame, tau, false, AssemblyMode::Conjugation)?;
        let w = product_norm_weights(ops, partition, tau);
        Ok(PrescribedSolver { tau, solver: LeastNormSolver::new(op, ops, partition, Some(&w))? })
    }

    /// `u` with `L_τ u = v` inside, `tr u = fixed` on `Γ_{−sgn τ}`, and the
    /// smallest product norm among all such fields.
    pub fn solve_r(&self, v: &[c64], fixed: &[c64]) -> Vec<c64> {
        self.solver.solve_prescribed(v, fixed)
    }

    pub fn product_norm(&self, u: &[c64]) -> f64 {
        self.solver.weighted_norm(u)
    }
}

pub fn solve_r(
    ops: &OperatorSet,
    frame: &CoordinateFrame,
    partition: &BoundaryPartition,
    tau: f64,
    v: &[c64],
    fixed: &[c64],
) -> Result<Vec<c64>> {
    Ok(PrescribedSolver::new(ops, frame, partition, tau)?.solve_r(v, fixed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SupportTag {
    BTilde,
    FTilde,
}

#[derive(Debug, Clone)]
pub struct CgoHarmonic {
    /// The weight exponent: `τ` for `μ_τ`, `−τ` for `ν_{−τ}`.
    pub tau: f64,
    pub mode: AngularMode,
    /// Weighted field (`μ_τ` or `ν_{−τ}`).
    pub field: Vec<c64>,
    /// Unweighted harmonic `ζ^{τ} μ_τ` or `ζ^{−τ} ν_{−τ}`.
    pub harmonic: Vec<c64>,
    pub support: SupportTag,
    /// `‖field − h‖_M`.
    pub asymptotic_error: f64,
    pub profile: Vec<c64>,
}

fn build(
    solver: &PrescribedSolver,
    ops: &OperatorSet,
    frame: &CoordinateFrame,
    cutoffs: &CutoffPair,
    mode: &AngularMode,
    side: Side,
    support: SupportTag,
) -> CgoHarmonic {
    let profile = incident_profile(ops, frame, mode, side);
    let h = &profile.h;
    // Feeding the discrete L_τ h (rather than Δ_h h) makes L_τ μ vanish exactly.
    let lh = solver.solver.op.apply_interior(ops, h);
    let chi = cutoffs.side(side);
    let mut fixed = vec![ZERO; ops.n()];
    for (b, &v) in ops.boundary.iter().enumerate() {
        fixed[v] = h[v] * chi[b];
    }
    let r = solver.solve_r(&lh, &fixed);
    let field: Vec<c64> = h.iter().zip(&r).map(|(a, b)| a - b).collect();
    let harmonic = field.iter().zip(&solver.solver.op.weight).map(|(a, w)| a * w).collect();
    let diff: Vec<c64> = field.iter().zip(h).map(|(a, b)| a - b).collect();
    CgoHarmonic {
        tau: solver.tau,
        mode: mode.clone(),
        field,
        harmonic,
        support,
        asymptotic_error: ops.mass_norm(&diff),
        profile: profile.h,
    }
}

/// `μ_τ = h₊ − R_τ(L_τ h₊, χ₊ tr h₊)`, trace supported in `B̃`.
pub fn build_mu(
    solver: &PrescribedSolver,
    ops: &OperatorSet,
    frame: &CoordinateFrame,
    cutoffs: &CutoffPair,
    mode: &AngularMode,
) -> Result<CgoHarmonic> {
    if solver.tau <= 0.0 {
        return Err(ReconError::Invalid("mu needs the positive-tau solver".into()));
    }
    Ok(build(solver, ops, frame, cutoffs, mode, Side::Plus, SupportTag::BTilde))
}

/// `ν_{−τ} = h₋ − R_{−τ}(L_{−τ} h₋, χ₋ tr h₋)` with `g ≡ 1`, trace supported in `F̃`.
pub fn build_nu(
    solver: &PrescribedSolver,
    ops: &OperatorSet,
    frame: &CoordinateFrame,
    cutoffs: &CutoffPair,
) -> Result<CgoHarmonic> {
    if solver.tau >= 0.0 {
        return Err(ReconError::Invalid("nu needs the negative-tau solver".into()));
    }
    Ok(build(solver, ops, frame, cutoffs, &AngularMode::one(), Side::Minus, SupportTag::FTilde))
}

impl CgoHarmonic {
    /// Largest `|tr field|` outside the declared support mask.
    pub fn leak(&self, ops: &OperatorSet, partition: &BoundaryPartition) -> f64 {
        let mask = match self.support {
            SupportTag::BTilde => &partition.b_tilde,
            SupportTag::FTilde => &partition.f_tilde,
        };
        ops.boundary
            .iter()
            .enumerate()
            .filter(|(b, _)| !mask[*b])
            .fold(0.0f64, |a, (_, &v)| a.max(self.field[v].norm()))
    }

    pub fn trace(&self, ops: &OperatorSet) -> Vec<c64> {
        ops.trace(&self.field)
    }

    pub fn harmonic_trace(&self, ops: &OperatorSet) -> Vec<c64> {
        ops.trace(&self.harmonic)
    }
}
