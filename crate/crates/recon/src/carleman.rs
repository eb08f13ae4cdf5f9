//! Conjugated Laplacians `L_τ = ζ^{−τ} Δ ζ^{τ}` and their Green's operators.
//!
//! `H_τ f` is the M-smallest field supported off `Γ_{−sgn τ}` whose interior
//! rows satisfy `L_τ u = f`. It is computed from the normal equations of
//! that least-norm problem,
//!
//! ```text
//! C = A[I, X],   S = C W⁻¹ Cᴴ,   H f = W⁻¹ Cᴴ S⁻¹ f_I
//! ```
//!
//! where `X` is the interior plus the free boundary half. `S` inherits its
//! conditioning from the Carleman estimate, so nothing here touches the
//! exponentially ill-conditioned zero-Dirichlet inverse of `L_τ`. The
//! result is the same operator as "particular solve, then remove the
//! kernel component", which [`KernelBasis`] builds literally for testing.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::discretization::{normal_derivative, OperatorSet};
use crate::error::{ReconError, Result};
use crate::geometry::{smoothstep, BoundaryPartition, CoordinateFrame, Mesh, Side};
use crate::linalg::{c64, inner, weighted_operator_norm, Csr, GeneralFactor, HermitianFactor, I, ONE, ZERO};

/// Largest admissible `max |ζ|^{±|τ|}`.
pub const MAX_WEIGHT_GROWTH: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AssemblyMode {
    /// `diag(ζ^{−τ}) Δ_h diag(ζ^{τ})`.
    Conjugation,
    /// `Δ_h + τ/z (4∂z̄ − 2(n−2)/(z−z̄))` with recovered nodal derivatives.
    Expanded,
}

#[derive(Debug, Clone)]
pub struct ConjugatedOperator {
    pub tau: f64,
    pub barred: bool,
    pub mode: AssemblyMode,
    /// Full `N × N`; only interior rows carry the equation.
    pub matrix: Csr<c64>,
    /// `ζ^τ`, or `ζ̄^τ` when barred.
    pub weight: Vec<c64>,
}

pub fn weight_growth(frame: &CoordinateFrame, tau: f64) -> f64 {
    frame.zeta.iter().fold(1.0f64, |g, z| {
        let l = z.norm().ln() * tau.abs();
        g.max(l.exp()).max((-l).exp())
    })
}

/// `ζ^τ` (or `ζ̄^τ`) on the principal branch; `Re ζ = r/d > 0` keeps it smooth.
pub fn power_weight(frame: &CoordinateFrame, tau: f64, barred: bool) -> Vec<c64> {
    frame
        .zeta
        .iter()
        .map(|z| {
            let b = if barred { z.conj() } else { *z };
            (b.ln() * tau).exp()
        })
        .collect()
}

pub fn assemble_conjugated(
    ops: &OperatorSet,
    frame: &CoordinateFrame,
    tau: f64,
    barred: bool,
    mode: AssemblyMode,
) -> Result<ConjugatedOperator> {
    if !tau.is_finite() {
        return Err(ReconError::Invalid(format!("tau must be finite, got {tau}")));
    }
    let growth = weight_growth(frame, tau);
    if growth > MAX_WEIGHT_GROWTH {
        return Err(ReconError::TauTooLarge { tau, growth });
    }
    let weight = power_weight(frame, tau, barred);
    let n = ops.n();
    let matrix = match mode {
        AssemblyMode::Conjugation => {
            let t = ops
                .stiffness
                .triplets()
                .into_iter()
                .map(|(i, j, k)| (i, j, -weight[j] / weight[i] * (k / ops.mass[i])))
                .collect();
            Csr::from_triplets(n, n, t)
        }
        AssemblyMode::Expanded => {
            let nd = frame.dimension as f64 - 2.0;
            // 4∂z̄ = 2(∂x1 + i∂r); the barred operator swaps z and z̄.
            let dir = if barred { -I } else { I };
            let mut t: Vec<(usize, usize, c64)> = ops
                .stiffness
                .triplets()
                .into_iter()
                .map(|(i, j, k)| (i, j, c64::new(-k / ops.mass[i], 0.0)))
                .collect();
            for i in 0..n {
                let z = if barred { frame.z[i].conj() } else { frame.z[i] };
                let s = tau / z;
                for (j, d) in ops.dx1.row(i) {
                    t.push((i, j, s * 2.0 * d));
                }
                for (j, d) in ops.dr.row(i) {
                    t.push((i, j, s * dir * 2.0 * d));
                }
                let zz = z - z.conj();
                t.push((i, i, -s * 2.0 * nd / zz));
            }
            Csr::from_triplets(n, n, t)
        }
    };
    Ok(ConjugatedOperator { tau, barred, mode, matrix, weight })
}

impl ConjugatedOperator {
    pub fn apply(&self, u: &[c64]) -> Vec<c64> {
        self.matrix.apply(u)
    }

    /// `L_τ u` with boundary rows set to zero.
    pub fn apply_interior(&self, ops: &OperatorSet, u: &[c64]) -> Vec<c64> {
        let mut out = vec![ZERO; ops.n()];
        for &v in &ops.interior {
            out[v] = self.matrix.row(v).map(|(j, a)| a * u[j]).sum();
        }
        out
    }

    pub fn side(&self) -> Side {
        Side::of(self.tau)
    }
}

fn csr_apply_mat(a: &Csr<c64>, x: &Mat<c64>) -> Mat<c64> {
    let k = x.ncols();
    let mut out = Mat::<c64>::zeros(a.nrows, k);
    for c in 0..k {
        let col = x.col(c);
        for i in 0..a.nrows {
            let mut acc = ZERO;
            for (j, v) in a.row(i) {
                acc += v * col[j];
            }
            out[(i, c)] = acc;
        }
    }
    out
}

/// Least-norm solver for `A[I, X] u_X = f_I` in a diagonal weighted norm.
pub struct LeastNormSolver {
    pub op: ConjugatedOperator,
    pub side: Side,
    /// Vertices of `X`: interior plus the free boundary half.
    pub free: Vec<usize>,
    /// Boundary vertices held at prescribed values.
    pub fixed: Vec<usize>,
    pub weights: Vec<f64>,
    interior: Vec<usize>,
    interior_mass: Vec<f64>,
    c: Csr<c64>,
    c_adj: Csr<c64>,
    factor: HermitianFactor,
    n: usize,
}

impl LeastNormSolver {
    /// `weights` is per vertex; `None` means the lumped mass (the `M` norm).
    pub fn new(
        op: ConjugatedOperator,
        ops: &OperatorSet,
        partition: &BoundaryPartition,
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        let side = op.side();
        let free_side = partition.free_side(side);
        let n = ops.n();
        let mut free = Vec::new();
        let mut fixed = Vec::new();
        let mut free_pos = vec![None; n];
        for v in 0..n {
            let is_free = match ops.boundary_index[v] {
                None => true,
                Some(b) => free_side[b],
            };
            if is_free {
                free_pos[v] = Some(free.len());
                free.push(v);
            } else {
                fixed.push(v);
            }
        }
        let w: Vec<f64> = free.iter().map(|&v| weights.map_or(ops.mass[v], |w| w[v])).collect();
        let c = op.matrix.submatrix(&ops.interior, &free_pos, free.len());
        let ct = c.transpose();
        let mut t = Vec::new();
        for (jx, &wj) in w.iter().enumerate() {
            let col: Vec<(usize, c64)> = ct.row(jx).collect();
            for &(i, a) in &col {
                for &(k, b) in &col {
                    t.push((i, k, a * b.conj() / wj));
                }
            }
        }
        let ni = ops.n_interior();
        let s = Csr::from_triplets(ni, ni, t);
        let factor = HermitianFactor::new(&s)?;
        let c_adj = Csr {
            values: ct.values.iter().map(|v| v.conj()).collect(),
            ..ct
        };
        Ok(LeastNormSolver {
            op,
            side,
            free,
            fixed,
            weights: w,
            interior: ops.interior.clone(),
            interior_mass: ops.interior.iter().map(|&v| ops.mass[v]).collect(),
            c,
            c_adj,
            factor,
            n,
        })
    }

    fn scatter_free(&self, ux: &Mat<c64>) -> Mat<c64> {
        let mut out = Mat::<c64>::zeros(self.n, ux.ncols());
        for (p, &v) in self.free.iter().enumerate() {
            for c in 0..ux.ncols() {
                out[(v, c)] = ux[(p, c)];
            }
        }
        out
    }

    fn gather_free(&self, u: &Mat<c64>) -> Mat<c64> {
        Mat::from_fn(self.free.len(), u.ncols(), |p, c| u[(self.free[p], c)])
    }

    fn gather_interior(&self, u: &Mat<c64>) -> Mat<c64> {
        Mat::from_fn(self.interior.len(), u.ncols(), |p, c| u[(self.interior[p], c)])
    }

    /// `W⁻¹ Cᴴ y` scattered to full length.
    fn lift(&self, y: &Mat<c64>) -> Mat<c64> {
        let mut ux = csr_apply_mat(&self.c_adj, y);
        for p in 0..ux.nrows() {
            let s = 1.0 / self.weights[p];
            for c in 0..ux.ncols() {
                ux[(p, c)] *= s;
            }
        }
        self.scatter_free(&ux)
    }

    /// `H f`, columnwise.
    pub fn h_mat(&self, f: &Mat<c64>) -> Mat<c64> {
        let mut y = self.gather_interior(f);
        self.factor.solve_mat(&mut y);
        self.lift(&y)
    }

    /// Projection onto the kernel `{u : supp u ⊆ X, A[I, X] u_X = 0}`,
    /// orthogonal in the solver's weighted norm.
    pub fn project_mat(&self, u: &Mat<c64>) -> Mat<c64> {
        let ux = self.gather_free(u);
        let mut y = csr_apply_mat(&self.c, &ux);
        self.factor.solve_mat(&mut y);
        let corr = self.lift(&y);
        let mut out = self.scatter_free(&ux);
        for r in 0..out.nrows() {
            for c in 0..out.ncols() {
                out[(r, c)] -= corr[(r, c)];
            }
        }
        out
    }

    /// M-adjoint of `H` (valid when the weights are the lumped mass).
    pub fn h_adjoint_mat(&self, f: &Mat<c64>) -> Mat<c64> {
        let fx = self.gather_free(f);
        let mut y = csr_apply_mat(&self.c, &fx);
        self.factor.solve_mat(&mut y);
        let mut out = Mat::<c64>::zeros(self.n, f.ncols());
        for (p, &v) in self.interior.iter().enumerate() {
            let s = 1.0 / self.interior_mass[p];
            for c in 0..f.ncols() {
                out[(v, c)] = y[(p, c)] * s;
            }
        }
        out
    }

    pub fn h(&self, f: &[c64]) -> Vec<c64> {
        first_col(self.h_mat(&col(f)))
    }

    pub fn project(&self, u: &[c64]) -> Vec<c64> {
        first_col(self.project_mat(&col(u)))
    }

    pub fn h_adjoint(&self, f: &[c64]) -> Vec<c64> {
        first_col(self.h_adjoint_mat(&col(f)))
    }

    /// Solves `L u = v` inside with `u = fixed_values` on the fixed boundary
    /// half, minimizing the weighted norm over the free part.
    pub fn solve_prescribed(&self, v: &[c64], fixed_values: &[c64]) -> Vec<c64> {
        let mut vf = vec![ZERO; fixed_values.len()];
        for &j in &self.fixed {
            vf[j] = fixed_values[j];
        }
        let corr = self.op.matrix.apply(&vf);
        let rhs: Vec<c64> = v.iter().zip(&corr).map(|(a, b)| a - b).collect();
        let mut u = self.h(&rhs);
        for &j in &self.fixed {
            u[j] = fixed_values[j];
        }
        u
    }

    pub fn weighted_norm(&self, u: &[c64]) -> f64 {
        self.free.iter().zip(&self.weights).map(|(&v, w)| w * u[v].norm_sqr()).sum::<f64>().sqrt()
    }
}

fn col(v: &[c64]) -> Mat<c64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn first_col(m: Mat<c64>) -> Vec<c64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

/// `G_τ = H_τ + π_τ H̄_{−τ}*` together with the barred dual bundle that
/// provides the adjoint.
pub struct GreensBundle {
    pub tau: f64,
    pub forward: LeastNormSolver,
    pub dual: LeastNormSolver,
}

impl GreensBundle {
    pub fn new(ops: &OperatorSet, frame: &CoordinateFrame, partition: &BoundaryPartition, tau: f64) -> Result<Self> {
        if tau == 0.0 {
            return Err(ReconError::Invalid("tau = 0 has no Carleman bundle".into()));
        }
        let fwd = assemble_conjugated(ops, frame, tau, false, AssemblyMode::Conjugation)?;
        let dual = assemble_conjugated(ops, frame, -tau, true, AssemblyMode::Conjugation)?;
        Ok(GreensBundle {
            tau,
            forward: LeastNormSolver::new(fwd, ops, partition, None)?,
            dual: LeastNormSolver::new(dual, ops, partition, None)?,
        })
    }

    pub fn apply_mat(&self, f: &Mat<c64>) -> Mat<c64> {
        let mut out = self.forward.h_mat(f);
        let p = self.forward.project_mat(&self.dual.h_adjoint_mat(f));
        out += &p;
        out
    }

    /// `Ḡ_{−τ} = H̄_{−τ} + π̄_{−τ} H_τ*`, the M-adjoint of `G_τ`.
    pub fn apply_dual_mat(&self, f: &Mat<c64>) -> Mat<c64> {
        let mut out = self.dual.h_mat(f);
        let p = self.dual.project_mat(&self.forward.h_adjoint_mat(f));
        out += &p;
        out
    }

    pub fn apply(&self, f: &[c64]) -> Vec<c64> {
        first_col(self.apply_mat(&col(f)))
    }

    pub fn apply_dual(&self, f: &[c64]) -> Vec<c64> {
        first_col(self.apply_dual_mat(&col(f)))
    }

    /// `T_τ = H_τ (1 − π̄_{−τ})`.
    pub fn t_apply(&self, f: &[c64]) -> Vec<c64> {
        let p = self.dual.project(f);
        let g: Vec<c64> = f.iter().zip(&p).map(|(a, b)| a - b).collect();
        self.forward.h(&g)
    }

    /// `T̄_{−τ} = H̄_{−τ} (1 − π_τ)`.
    pub fn t_dual_apply(&self, f: &[c64]) -> Vec<c64> {
        let p = self.forward.project(f);
        let g: Vec<c64> = f.iter().zip(&p).map(|(a, b)| a - b).collect();
        self.dual.h(&g)
    }

    /// `‖G_τ‖` in the lumped-mass norm.
    pub fn norm(&self, ops: &OperatorSet, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        weighted_operator_norm(&ops.mass, |f| self.apply(f), |f| self.apply_dual(f), 40, &mut rng)
    }

    /// `‖H_τ‖` in the lumped-mass norm.
    pub fn h_norm(&self, ops: &OperatorSet, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        weighted_operator_norm(&ops.mass, |f| self.forward.h(f), |f| self.forward.h_adjoint(f), 40, &mut rng)
    }

    /// `‖G_τ diag(q)‖`, the contraction factor of the scattering equation.
    pub fn scaled_norm(&self, ops: &OperatorSet, q: &[c64], seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        weighted_operator_norm(
            &ops.mass,
            |f| {
                let qf: Vec<c64> = f.iter().zip(q).map(|(a, b)| a * b).collect();
                self.apply(&qf)
            },
            |f| {
                let g = self.apply_dual(f);
                g.iter().zip(q).map(|(a, b)| a * b.conj()).collect()
            },
            40,
            &mut rng,
        )
    }
}

/// Dense basis of `N_τ`: one zero-Dirichlet solve per free boundary node.
/// Exponentially ill-conditioned in `τ`; meant for small diagnostic cases.
pub struct KernelBasis {
    pub tau: f64,
    pub barred: bool,
    pub nodes: Vec<usize>,
    pub columns: Mat<c64>,
}

pub fn kernel_basis(op: &ConjugatedOperator, ops: &OperatorSet, partition: &BoundaryPartition) -> Result<KernelBasis> {
    let side = partition.free_side(op.side());
    let nodes: Vec<usize> = ops.boundary.iter().zip(&side).filter(|(_, &s)| s).map(|(&v, _)| v).collect();
    let ni = ops.n_interior();
    let aii = op.matrix.submatrix(&ops.interior, &ops.interior_index, ni);
    let lu = GeneralFactor::complex(&aii).map_err(|_| ReconError::TauTooLarge { tau: op.tau, growth: f64::INFINITY })?;
    let mut rhs = Mat::<c64>::zeros(ni, nodes.len());
    for (c, &j) in nodes.iter().enumerate() {
        for (p, &i) in ops.interior.iter().enumerate() {
            let a: c64 = op.matrix.row(i).filter(|&(k, _)| k == j).map(|(_, a)| a).sum();
            rhs[(p, c)] = -a;
        }
    }
    lu.solve_mat(&mut rhs, false);
    let mut columns = Mat::<c64>::zeros(ops.n(), nodes.len());
    for (c, &j) in nodes.iter().enumerate() {
        for (p, &i) in ops.interior.iter().enumerate() {
            columns[(i, c)] = rhs[(p, c)];
        }
        columns[(j, c)] = ONE;
    }
    Ok(KernelBasis { tau: op.tau, barred: op.barred, nodes, columns })
}

/// `π u = K (KᴴMK)⁻¹ KᴴM u` built from an explicit kernel basis.
pub struct KernelProjector {
    basis: Mat<c64>,
    gram: faer::linalg::solvers::PartialPivLu<c64>,
    mass: Vec<f64>,
    pub min_gram_singular_value: f64,
}

impl KernelProjector {
    pub fn new(kb: &KernelBasis, ops: &OperatorSet) -> Result<Self> {
        let k = &kb.columns;
        let m = k.ncols();
        let gram = Mat::from_fn(m, m, |a, b| (0..k.nrows()).map(|i| k[(i, a)].conj() * k[(i, b)] * ops.mass[i]).sum::<c64>());
        let sv = gram.singular_values().map_err(|e| ReconError::Factorization(format!("{e:?}")))?;
        let min = sv.last().copied().unwrap_or(0.0);
        Ok(KernelProjector { basis: k.clone(), gram: gram.partial_piv_lu(), mass: ops.mass.clone(), min_gram_singular_value: min })
    }

    pub fn apply(&self, u: &[c64]) -> Vec<c64> {
        use faer::linalg::solvers::Solve;
        let k = &self.basis;
        let rhs = Mat::from_fn(k.ncols(), 1, |a, _| (0..k.nrows()).map(|i| k[(i, a)].conj() * u[i] * self.mass[i]).sum());
        let coef = self.gram.solve(rhs);
        (0..k.nrows()).map(|i| (0..k.ncols()).map(|a| k[(i, a)] * coef[(a, 0)]).sum()).collect()
    }
}

/// `H f` the literal way: zero-Dirichlet particular solution, minus its
/// kernel component.
pub fn solve_h_via_kernel(op: &ConjugatedOperator, ops: &OperatorSet, proj: &KernelProjector, f: &[c64]) -> Result<Vec<c64>> {
    let ni = ops.n_interior();
    let aii = op.matrix.submatrix(&ops.interior, &ops.interior_index, ni);
    let lu = GeneralFactor::complex(&aii)?;
    let fi: Vec<c64> = ops.interior.iter().map(|&v| f[v]).collect();
    let x = lu.solve(&fi);
    let mut u = vec![ZERO; ops.n()];
    for (p, &v) in ops.interior.iter().enumerate() {
        u[v] = x[p];
    }
    let pu = proj.apply(&u);
    Ok(u.iter().zip(&pu).map(|(a, b)| a - b).collect())
}

/// `ρ² − |x − c|²`, zero on the sphere.
pub fn bubble(mesh: &Mesh, v: usize) -> f64 {
    let p = mesh.vertices[v];
    let d2: f64 = (0..3).map(|k| (p[k] - mesh.center[k]).powi(2)).sum();
    mesh.radius * mesh.radius - d2
}

/// Smooth random field with zero trace: the bubble times a random
/// complex quadratic in the centered coordinates.
pub fn random_zero_trace_field(mesh: &Mesh, rng: &mut ChaCha8Rng) -> Vec<c64> {
    let coef: Vec<c64> = (0..10).map(|_| c64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)).collect();
    (0..mesh.n_vertices())
        .map(|v| {
            if mesh.is_boundary(v) {
                return ZERO;
            }
            let p = mesh.vertices[v];
            let y = [0, 1, 2].map(|k| (p[k] - mesh.center[k]) / mesh.radius);
            let basis = [1.0, y[0], y[1], y[2], y[0] * y[0], y[1] * y[1], y[2] * y[2], y[0] * y[1], y[1] * y[2], y[0] * y[2]];
            let poly: c64 = coef.iter().zip(basis).map(|(c, b)| c * b).sum();
            poly * bubble(mesh, v)
        })
        .collect()
}

fn side_flux_norm(ops: &OperatorSet, partition: &BoundaryPartition, dnu: &[c64], side: &[bool]) -> f64 {
    (0..ops.n_boundary())
        .filter(|&b| side[b])
        .map(|b| ops.boundary_mass[b] * (partition.gamma[b] * dnu[b].norm()).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Ratio of the two sides of the Carleman estimate for a zero-trace field.
pub fn carleman_check(
    op: &ConjugatedOperator,
    ops: &OperatorSet,
    partition: &BoundaryPartition,
    u: &[c64],
) -> Result<f64> {
    if u.iter().all(|v| *v == ZERO) {
        return Err(ReconError::Invalid("carleman check needs a nonzero field".into()));
    }
    if ops.boundary.iter().any(|&v| u[v] != ZERO) {
        return Err(ReconError::Invalid("carleman check needs a zero-trace field".into()));
    }
    let t = op.tau.abs();
    let dnu = normal_derivative(ops, u, &vec![ZERO; ops.n()], &vec![ZERO; ops.n()]);
    let own = partition.free_side(op.side());
    let other: Vec<bool> = own.iter().map(|&s| !s).collect();
    let lu = op.apply_interior(ops, u);
    let num = t.powf(-0.5) * side_flux_norm(ops, partition, &dnu, &own) + ops.mass_norm(u);
    let den = ops.mass_norm(&lu) / t + t.powf(-0.5) * side_flux_norm(ops, partition, &dnu, &other);
    Ok(num / den)
}

/// Largest Carleman ratio over `samples` seeded random fields.
pub fn carleman_constant(
    op: &ConjugatedOperator,
    mesh: &Mesh,
    ops: &OperatorSet,
    partition: &BoundaryPartition,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let u = random_zero_trace_field(mesh, &mut rng);
        worst = worst.max(carleman_check(op, ops, partition, &u)?);
    }
    Ok(worst)
}

/// Bubble times a random quadratic times the square of a cutoff that
/// vanishes on and near `Γ_{−sgn τ}`: zero trace, and zero normal
/// derivative on that half.
pub fn reproduction_test_field(mesh: &Mesh, side: Side, rng: &mut ChaCha8Rng) -> Vec<c64> {
    let mut u = random_zero_trace_field(mesh, rng);
    let s = if side == Side::Plus { 1.0 } else { -1.0 };
    for (v, uv) in u.iter_mut().enumerate() {
        let p = mesh.vertices[v];
        let x_norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let xd: f64 = (0..3).map(|k| p[k] * (p[k] - mesh.center[k])).sum::<f64>() / (mesh.radius * x_norm);
        let chi = smoothstep((s * xd - 0.05) / 0.3);
        *uv *= chi * chi;
    }
    u
}

#[derive(Debug, Clone, Serialize)]
pub struct GreensReport {
    pub tau: f64,
    /// `‖(L G f − f)_I‖ / ‖f_I‖`.
    pub right_inverse: f64,
    /// `‖G‖_M`.
    pub norm: f64,
    /// `max |tr G f|` on `Γ_{−sgn τ}` over `max |G f|`.
    pub trace_support: f64,
    /// `|⟨G f, g⟩ − ⟨f, Ḡ g⟩|`, normalized.
    pub adjoint: f64,
    /// `‖G L v − v‖ / ‖v‖` on test fields vanishing to second order at `Γ_{−sgn τ}`.
    pub reproduction: f64,
    /// `‖π H f‖ / ‖H f‖`.
    pub projector_annihilates_h: f64,
    pub projector_idempotent: f64,
    pub projector_self_adjoint: f64,
    /// `T_τ* = T̄_{−τ}` defect.
    pub t_adjoint: f64,
}

fn rel(a: &[c64], b: &[c64], w: &[f64]) -> f64 {
    let d: Vec<c64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    crate::linalg::norm(w, &d) / crate::linalg::norm(w, b).max(f64::MIN_POSITIVE)
}

fn adjoint_defect(lhs: c64, rhs: c64, scale: f64) -> f64 {
    (lhs - rhs).norm() / scale.max(f64::MIN_POSITIVE)
}

pub fn greens_properties_report(
    bundle: &GreensBundle,
    mesh: &Mesh,
    ops: &OperatorSet,
    with_norm: bool,
    seed: u64,
) -> GreensReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = &ops.mass;
    let n = ops.n();
    let f = crate::linalg::random_complex(&mut rng, n);
    let g = crate::linalg::random_complex(&mut rng, n);
    let gf = bundle.apply(&f);
    let lgf = bundle.forward.op.apply_interior(ops, &gf);
    let fi: Vec<c64> = (0..n).map(|v| if mesh.is_boundary(v) { ZERO } else { f[v] }).collect();
    let right_inverse = rel(&lgf, &fi, m);

    let gmax = gf.iter().fold(0.0f64, |a, v| a.max(v.norm()));
    let trace_support = bundle.forward.fixed.iter().fold(0.0f64, |a, &v| a.max(gf[v].norm())) / gmax;

    let gbg = bundle.apply_dual(&g);
    let adjoint = adjoint_defect(
        inner(m, &gf, &g),
        inner(m, &f, &gbg),
        ops.mass_norm(&gf) * ops.mass_norm(&g) + ops.mass_norm(&f) * ops.mass_norm(&gbg),
    );

    let v = reproduction_test_field(mesh, bundle.forward.side, &mut rng);
    let lv = bundle.forward.op.apply_interior(ops, &v);
    let reproduction = rel(&bundle.apply(&lv), &v, m);

    let hf = bundle.forward.h(&f);
    let phf = bundle.forward.project(&hf);
    let projector_annihilates_h = ops.mass_norm(&phf) / ops.mass_norm(&hf);
    let pf = bundle.forward.project(&f);
    let projector_idempotent = rel(&bundle.forward.project(&pf), &pf, m);
    let pg = bundle.forward.project(&g);
    let projector_self_adjoint = adjoint_defect(
        inner(m, &pf, &g),
        inner(m, &f, &pg),
        ops.mass_norm(&pf) * ops.mass_norm(&g) + ops.mass_norm(&f) * ops.mass_norm(&pg),
    );
    let tf = bundle.t_apply(&f);
    let tg = bundle.t_dual_apply(&g);
    let t_adjoint = adjoint_defect(
        inner(m, &tf, &g),
        inner(m, &f, &tg),
        ops.mass_norm(&tf) * ops.mass_norm(&g) + ops.mass_norm(&f) * ops.mass_norm(&tg),
    );
    let norm = if with_norm { bundle.norm(ops, seed ^ 0x5eed) } else { f64::NAN };
    GreensReport {
        tau: bundle.tau,
        right_inverse,
        norm,
        trace_support,
        adjoint,
        reproduction,
        projector_annihilates_h,
        projector_idempotent,
        projector_self_adjoint,
        t_adjoint,
    }
}
