//! Scattering solution `ω = μ + G q ω` and the transform `t(τ, g)`.

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::Serialize;

use crate::carleman::GreensBundle;
use crate::cgo::{AngularMode, CgoHarmonic};
use crate::discretization::{OperatorSet, Potential};
use crate::dtn::PartialDtnView;
use crate::error::{ReconError, Result};
use crate::geometry::CoordinateFrame;
use crate::linalg::{c64, I, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// Neumann series; falls back to `Direct` if it stops contracting.
    Neumann,
    /// Dense LU of `I − G diag(q)`.
    Direct,
}

#[derive(Debug, Clone)]
pub struct ScatteringSolution {
    pub tau: f64,
    pub omega: Vec<c64>,
    /// `ζ^τ ω`, a solution of `(−Δ + q) w = 0`.
    pub w: Vec<c64>,
    pub iterations: usize,
    pub direct: bool,
    /// `‖ω − μ − G q ω‖_M / ‖ω‖_M`.
    pub residual: f64,
    /// Observed ratio of successive Neumann increments.
    pub contraction: f64,
}

const NEUMANN_TOL: f64 = 1e-14;
const NEUMANN_MAX: usize = 300;

fn times_q(q: &[c64], u: &[c64]) -> Vec<c64> {
    u.iter().zip(q).map(|(a, b)| a * b).collect()
}

fn neumann(bundle: &GreensBundle, ops: &OperatorSet, q: &[c64], mu: &[c64]) -> Result<(Vec<c64>, usize, f64)> {
    let mut omega = mu.to_vec();
    let mut last_step = f64::INFINITY;
    let mut ratio = 0.0f64;
    for it in 1..=NEUMANN_MAX {
        let next: Vec<c64> = bundle.apply(&times_q(q, &omega)).iter().zip(mu).map(|(g, m)| g + m).collect();
        let diff: Vec<c64> = next.iter().zip(&omega).map(|(a, b)| a - b).collect();
        let step = ops.mass_norm(&diff);
        let scale = ops.mass_norm(&next).max(f64::MIN_POSITIVE);
        if it > 1 && last_step > 0.0 {
            ratio = ratio.max(step / last_step);
        }
        omega = next;
        if step <= NEUMANN_TOL * scale {
            return Ok((omega, it, ratio));
        }
        if it > 3 && ratio >= 1.0 {
            return Err(ReconError::NotContracting { estimate: ratio });
        }
        last_step = step;
    }
    Err(ReconError::NotContracting { estimate: ratio })
}

/// Dense `(I − G diag(q)) ω = μ`; `N` columns of `G` are formed in batches.
fn direct(bundle: &GreensBundle, ops: &OperatorSet, q: &[c64], mu: &[c64]) -> Vec<c64> {
    let n = ops.n();
    let mut a = Mat::<c64>::identity(n, n);
    let batch = 256;
    let mut start = 0;
    while start < n {
        let k = batch.min(n - start);
        let f = Mat::from_fn(n, k, |i, c| if i == start + c { q[i] } else { ZERO });
        let g = bundle.apply_mat(&f);
        for c in 0..k {
            for i in 0..n {
                a[(i, start + c)] -= g[(i, c)];
            }
        }
        start += k;
    }
    let lu = a.partial_piv_lu();
    let x = lu.solve(Mat::from_fn(n, 1, |i, _| mu[i]));
    (0..n).map(|i| x[(i, 0)]).collect()
}

pub fn solve_omega(
    bundle: &GreensBundle,
    ops: &OperatorSet,
    q: &Potential,
    mu: &CgoHarmonic,
    mode: SolveMode,
) -> Result<ScatteringSolution> {
    if q.values.len() != ops.n() || mu.field.len() != ops.n() {
        return Err(ReconError::Mismatch("potential or incident field length".into()));
    }
    let qv = &q.values;
    let (omega, iterations, direct_used, contraction) = match mode {
        SolveMode::Neumann => match neumann(bundle, ops, qv, &mu.field) {
            Ok((w, it, r)) => (w, it, false, r),
            Err(ReconError::NotContracting { estimate }) => (direct(bundle, ops, qv, &mu.field), 0, true, estimate),
            Err(e) => return Err(e),
        },
        SolveMode::Direct => (direct(bundle, ops, qv, &mu.field), 0, true, f64::NAN),
    };
    let g = bundle.apply(&times_q(qv, &omega));
    let res: Vec<c64> = omega.iter().zip(&mu.field).zip(&g).map(|((w, m), g)| w - m - g).collect();
    let residual = ops.mass_norm(&res) / ops.mass_norm(&omega).max(f64::MIN_POSITIVE);
    let w = omega.iter().zip(&bundle.forward.op.weight).map(|(a, b)| a * b).collect();
    Ok(ScatteringSolution { tau: bundle.tau, omega, w, iterations, direct: direct_used, residual, contraction })
}

/// `∫ ν q ω`, bilinear.
pub fn transform_volume(ops: &OperatorSet, nu: &CgoHarmonic, q: &Potential, omega: &ScatteringSolution) -> c64 {
    (0..ops.n()).map(|v| nu.field[v] * q.values[v] * omega.omega[v] * ops.mass[v]).sum()
}

/// `∫_∂Ω tr(v_{−τ}) (Λ_q − Λ₀) tr(w_τ)` read through the guarded view.
pub fn transform_boundary(nu_trace: &[c64], partial: &PartialDtnView, w_trace: &[c64]) -> Result<c64> {
    partial.pair(nu_trace, w_trace)
}

/// `∫_Ω q g(θ) r^{−(n−2)} dV` by lumped quadrature.
pub fn reference_integral(ops: &OperatorSet, frame: &CoordinateFrame, q: &Potential, mode: &AngularMode) -> c64 {
    let e = frame.dimension as i32 - 2;
    (0..ops.n())
        .map(|v| q.values[v] * (ops.mass[v] * mode.eval(frame.theta[v]) * frame.r[v].powi(-e)))
        .sum()
}

/// `(2i)^{−(n−2)}`.
pub fn limit_constant(dimension: usize) -> c64 {
    let mut c = ONE;
    for _ in 0..dimension.saturating_sub(2) {
        c /= I * 2.0;
    }
    c
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformSample {
    pub tau: f64,
    pub mode: AngularMode,
    #[serde(with = "crate::linalg::complex_pair")]
    pub t_volume: c64,
    #[serde(with = "crate::linalg::complex_pair")]
    pub t_boundary: c64,
    #[serde(with = "crate::linalg::complex_pair")]
    pub oracle: c64,
    #[serde(with = "crate::linalg::complex_pair")]
    pub limit_constant: c64,
}

impl TransformSample {
    pub fn estimate(&self) -> c64 {
        self.t_boundary / self.limit_constant
    }

    pub fn consistency(&self) -> f64 {
        (self.t_volume - self.t_boundary).norm() / self.t_volume.norm().max(1e-300)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RadonLimit {
    #[serde(with = "crate::linalg::complex_pair")]
    pub estimate: c64,
    #[serde(with = "crate::linalg::complex_pair")]
    pub oracle: c64,
    pub errors: Vec<f64>,
    pub relative_error: f64,
    pub strictly_decreasing: bool,
}

/// Estimate at the largest `τ` and the error trend against the oracle.
pub fn radon_limit(samples: &[TransformSample]) -> Result<RadonLimit> {
    if samples.len() < 2 {
        return Err(ReconError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let mut sorted: Vec<&TransformSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    let last = sorted.last().expect("nonempty");
    let errors: Vec<f64> = sorted.iter().map(|s| (s.estimate() - s.oracle).norm()).collect();
    let strictly_decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let estimate = last.estimate();
    Ok(RadonLimit {
        estimate,
        oracle: last.oracle,
        relative_error: (estimate - last.oracle).norm() / last.oracle.norm().max(f64::MIN_POSITIVE),
        errors,
        strictly_decreasing,
    })
}
