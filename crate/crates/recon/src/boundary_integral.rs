//! Single-layer operator `S_τ` and the boundary integral equation
//! `h = tr(u_τ) + S_τ (Λ_q − Λ₀) h`.

use faer::linalg::solvers::Solve;
use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::carleman::GreensBundle;
use crate::discretization::{DirichletSolver, OperatorSet, Potential};
use crate::dtn::{DtnDifference, PartialDtnView};
use crate::error::{ReconError, Result};
use crate::geometry::BoundaryPartition;
use crate::linalg::{c64, weighted_operator_norm, ONE, ZERO};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Above this the boundary system is rejected; `τ` should be increased.
pub const MAX_CONDITION: f64 = 1e10;

const COLUMN_BATCH: usize = 96;

/// How the trace adjoint `Tr*` is realized when forming `S_τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointConvention {
    /// `Tr* h = M⁻¹ Trᵀ M∂ h`, the adjoint for the lumped inner products.
    Weighted,
    /// `Trᵀ h`; ignores both masses. Kept as a negative control.
    PlainTranspose,
}

pub struct SingleLayer {
    pub tau: f64,
    pub convention: AdjointConvention,
    /// Boundary-by-boundary matrix, indexed by boundary position.
    pub matrix: Mat<c64>,
    /// Columns that can be nonzero (the free side of the dual bundle).
    pub active_columns: Vec<usize>,
}

fn boundary_weight(bundle: &GreensBundle, ops: &OperatorSet) -> Vec<c64> {
    ops.boundary.iter().map(|&v| bundle.forward.op.weight[v]).collect()
}

/// `S_τ = Z∂ Tr G_τ Tr* Z∂⁻¹`. Columns outside the dual free side vanish
/// because `H̄*` only sees free boundary values, so they are skipped.
pub fn assemble_single_layer(
    bundle: &GreensBundle,
    ops: &OperatorSet,
    partition: &BoundaryPartition,
    convention: AdjointConvention,
) -> SingleLayer {
    let nb = ops.n_boundary();
    let n = ops.n();
    let z = boundary_weight(bundle, ops);
    let free = partition.free_side(bundle.dual.side);
    let active: Vec<usize> = (0..nb).filter(|&b| free[b]).collect();
    let blocks: Vec<(usize, Mat<c64>)> = active
        .par_chunks(COLUMN_BATCH)
        .enumerate()
        .map(|(k, cols)| {
            let mut f = Mat::<c64>::zeros(n, cols.len());
            for (c, &b) in cols.iter().enumerate() {
                let v = ops.boundary[b];
                let scale = match convention {
                    AdjointConvention::Weighted => ops.boundary_mass[b] / ops.mass[v],
                    AdjointConvention::PlainTranspose => 1.0,
                };
                f[(v, c)] = c64::new(scale, 0.0) / z[b];
            }
            (k, bundle.apply_mat(&f))
        })
        .collect();
    let mut matrix = Mat::<c64>::zeros(nb, nb);
    for (k, g) in blocks {
        for (c, &b) in active[k * COLUMN_BATCH..].iter().take(g.ncols()).enumerate() {
            for (i, &v) in ops.boundary.iter().enumerate() {
                matrix[(i, b)] = z[i] * g[(v, c)];
            }
        }
    }
    SingleLayer { tau: bundle.tau, convention, matrix, active_columns: active }
}

impl SingleLayer {
    pub fn apply(&self, h: &[c64]) -> Vec<c64> {
        crate::dtn::apply_mat(&self.matrix, h)
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `(tr ∘ G_τ)* h = G_τ* Tr* h`, the intermediate field of the single layer.
pub fn trace_green_adjoint(bundle: &GreensBundle, ops: &OperatorSet, h: &[c64]) -> Vec<c64> {
    bundle.apply_dual(&ops.trace_adjoint(h))
}

fn frobenius(m: &Mat<c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Relative Frobenius distance between `S_τ D` and `Tr Z G_τ Z⁻¹ q P_q`.
/// Reads the full difference: a diagnostic, never on the reconstruction path.
pub fn factorization_check(
    single: &SingleLayer,
    d: &DtnDifference,
    q: &Potential,
    ops: &OperatorSet,
    bundle: &GreensBundle,
) -> Result<f64> {
    let nb = ops.n_boundary();
    let lhs = &single.matrix * &d.matrix;
    let pq = DirichletSolver::new(ops, q)?.poisson_mat(&Mat::<c64>::identity(nb, nb));
    let weight = &bundle.forward.op.weight;
    let starts: Vec<usize> = (0..nb).step_by(COLUMN_BATCH).collect();
    let blocks: Vec<(usize, Mat<c64>)> = starts
        .par_iter()
        .map(|&s| {
            let k = COLUMN_BATCH.min(nb - s);
            let f = Mat::from_fn(ops.n(), k, |i, c| q.values[i] * pq[(i, s + c)] / weight[i]);
            (s, bundle.apply_mat(&f))
        })
        .collect();
    let mut rhs = Mat::<c64>::zeros(nb, nb);
    for (s, g) in blocks {
        for c in 0..g.ncols() {
            for (i, &v) in ops.boundary.iter().enumerate() {
                rhs[(i, s + c)] = weight[v] * g[(v, c)];
            }
        }
    }
    let scale = frobenius(&rhs).max(frobenius(&lhs));
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(frobenius(&(&lhs - &rhs)) / scale)
}

#[derive(Debug, Clone)]
pub struct BieSolution {
    pub tau: f64,
    /// Solution trace, zero outside `B̃`.
    pub trace: Vec<c64>,
    pub condition: f64,
    /// `‖h − u − S D h‖_∂ / ‖h‖_∂`.
    pub residual: f64,
    /// View reads consumed by this solve.
    pub reads: usize,
}

fn positions(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

/// 2-norm condition number from the singular values.
fn condition_number(a: &Mat<c64>) -> Result<f64> {
    let s = a.singular_values().map_err(|e| ReconError::Factorization(format!("{e:?}")))?;
    let max = s.iter().cloned().fold(0.0f64, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

/// Solves the boundary equation on the `B̃` subspace using only the
/// `(F̃, B̃)` block of the data.
pub fn solve_bie(single: &SingleLayer, partial: &PartialDtnView, u_trace: &[c64]) -> Result<BieSolution> {
    let nb = single.size();
    if u_trace.len() != nb || partial.size() != nb {
        return Err(ReconError::Mismatch("boundary vector length".into()));
    }
    if let Some(j) = u_trace.iter().zip(&partial.input_mask).position(|(v, &m)| !m && *v != ZERO) {
        return Err(ReconError::Invalid(format!("incident trace supported at boundary node {j} outside B̃")));
    }
    let reads_before = partial.reads();
    let bt = positions(&partial.input_mask);
    let ft = positions(&partial.output_mask);
    let d = partial.block(&ft, &bt)?;
    let s = Mat::from_fn(bt.len(), ft.len(), |a, b| single.matrix[(bt[a], ft[b])]);
    let mut a = -(&s * &d);
    for i in 0..bt.len() {
        a[(i, i)] += ONE;
    }
    let condition = condition_number(&a)?;
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(ReconError::IllConditioned { condition });
    }
    let x = a.partial_piv_lu().solve(Mat::from_fn(bt.len(), 1, |i, _| u_trace[bt[i]]));
    let mut trace = vec![ZERO; nb];
    for (p, &b) in bt.iter().enumerate() {
        trace[b] = x[(p, 0)];
    }
    let dh = partial.apply(&trace)?;
    let sdh = single.apply(&dh);
    let r: Vec<c64> = (0..nb).map(|i| trace[i] - u_trace[i] - sdh[i]).collect();
    let norm = |v: &[c64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let residual = norm(&r) / norm(&trace).max(f64::MIN_POSITIVE);
    Ok(BieSolution { tau: single.tau, trace, condition, residual, reads: partial.reads() - reads_before })
}

/// Residuals of the two directions of the equivalence between the boundary
/// equation and the interior equation `(I − Z G Z⁻¹ q) P_q h = P₀ f`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EquivalenceReport {
    pub tau: f64,
    /// Boundary solution `h`, checked in the interior equation.
    pub boundary_to_interior: f64,
    /// Interior solution `u`, its trace checked in the boundary equation.
    pub interior_to_boundary: f64,
}

/// Diagnostic on the full difference `D`, for a given right-hand side `f`.
pub fn equivalence_check(
    single: &SingleLayer,
    d: &DtnDifference,
    q: &Potential,
    ops: &OperatorSet,
    bundle: &GreensBundle,
    f: &[c64],
) -> Result<EquivalenceReport> {
    let nb = ops.n_boundary();
    let n = ops.n();
    let weight = &bundle.forward.op.weight;
    let zgzq = |u: &[c64]| -> Vec<c64> {
        let g = bundle.apply(&(0..n).map(|i| q.values[i] * u[i] / weight[i]).collect::<Vec<_>>());
        (0..n).map(|i| weight[i] * g[i]).collect()
    };
    let norm = |v: &[c64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let sd = &single.matrix * &d.matrix;
    let mut a = -sd.clone();
    for i in 0..nb {
        a[(i, i)] += ONE;
    }
    let x = a.partial_piv_lu().solve(Mat::from_fn(nb, 1, |i, _| f[i]));
    let h: Vec<c64> = (0..nb).map(|i| x[(i, 0)]).collect();

    let pq = DirichletSolver::new(ops, q)?;
    let p0 = DirichletSolver::new(ops, &Potential::zero(n))?;
    let u = pq.poisson(&h);
    let gu = zgzq(&u);
    let lhs: Vec<c64> = (0..n).map(|i| u[i] - gu[i]).collect();
    let rhs = p0.poisson(f);
    let diff: Vec<c64> = (0..n).map(|i| lhs[i] - rhs[i]).collect();
    let boundary_to_interior = norm(&diff) / norm(&rhs).max(f64::MIN_POSITIVE);

    // Interior direction: u = P₀ f + Z G Z⁻¹ q u by fixed-point iteration.
    let y = rhs;
    let mut u = y.clone();
    for _ in 0..200 {
        let next: Vec<c64> = zgzq(&u).iter().zip(&y).map(|(a, b)| a + b).collect();
        let step: f64 = norm(&next.iter().zip(&u).map(|(a, b)| a - b).collect::<Vec<_>>());
        u = next;
        if step <= 1e-15 * norm(&u) {
            break;
        }
    }
    let hu = ops.trace(&u);
    let shu = crate::dtn::apply_mat(&sd, &hu);
    let r: Vec<c64> = (0..nb).map(|i| hu[i] - shu[i] - f[i]).collect();
    let interior_to_boundary = norm(&r) / norm(f).max(f64::MIN_POSITIVE);
    Ok(EquivalenceReport { tau: bundle.tau, boundary_to_interior, interior_to_boundary })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IsomorphismReport {
    pub tau: f64,
    /// `‖G_τ q‖` in the lumped-mass norm.
    pub contraction: f64,
    /// Estimate of the smallest singular value of `I − G_τ q`.
    pub smallest_singular_value: f64,
    /// `1 − ‖G_τ q‖`, the Neumann lower bound (may be negative).
    pub neumann_bound: f64,
}

fn neumann_inverse(apply: impl Fn(&[c64]) -> Vec<c64>, ops: &OperatorSet, f: &[c64]) -> Vec<c64> {
    let mut u = f.to_vec();
    for _ in 0..200 {
        let next: Vec<c64> = apply(&u).iter().zip(f).map(|(a, b)| a + b).collect();
        let diff: Vec<c64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let step = ops.mass_norm(&diff);
        u = next;
        if step <= 1e-14 * ops.mass_norm(&u) {
            break;
        }
    }
    u
}

/// Smallest singular value of `I − G_τ q` via the norm of its inverse. The
/// inverse is applied by Neumann series, so this needs `‖G_τ q‖ < 1`.
pub fn isomorphism_check(bundle: &GreensBundle, q: &Potential, ops: &OperatorSet, seed: u64) -> Result<IsomorphismReport> {
    if q.is_zero() {
        return Ok(IsomorphismReport { tau: bundle.tau, contraction: 0.0, smallest_singular_value: 1.0, neumann_bound: 1.0 });
    }
    let qv = &q.values;
    let contraction = bundle.scaled_norm(ops, qv, seed);
    if contraction >= 1.0 {
        return Err(ReconError::NotContracting { estimate: contraction });
    }
    let gq = |f: &[c64]| bundle.apply(&f.iter().zip(qv).map(|(a, b)| a * b).collect::<Vec<_>>());
    let qg_adj = |f: &[c64]| bundle.apply_dual(f).iter().zip(qv).map(|(a, b)| a * b.conj()).collect::<Vec<_>>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv_norm = weighted_operator_norm(
        &ops.mass,
        |f| neumann_inverse(gq, ops, f),
        |f| neumann_inverse(qg_adj, ops, f),
        12,
        &mut rng,
    );
    Ok(IsomorphismReport {
        tau: bundle.tau,
        contraction,
        smallest_singular_value: 1.0 / inv_norm,
        neumann_bound: 1.0 - contraction,
    })
}
