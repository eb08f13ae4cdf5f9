//! P1 finite elements on the ball mesh.
//!
//! Both mass matrices are lumped (diagonal). That keeps `M diag(q)`
//! symmetric and lets diagonal weights commute with `M` and `M∂`, which is
//! what turns the weighted adjoint identities downstream into exact
//! finite-dimensional statements.

use std::path::{Path, PathBuf};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{ReconError, Result};
use crate::geometry::{CoordinateFrame, Mesh};
use crate::linalg::{c64, inverse_one_norm_estimate, Csr, GeneralFactor, I, ZERO};

/// Condition estimate above which a Dirichlet operator counts as singular.
pub const NEAR_SINGULAR: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub stiffness: Csr<f64>,
    /// Lumped volume mass per vertex.
    pub mass: Vec<f64>,
    /// Lumped surface mass per boundary position.
    pub boundary_mass: Vec<f64>,
    /// Nodal gradient recovery, one operator per Cartesian direction.
    pub grad: [Csr<f64>; 3],
    pub dx1: Csr<f64>,
    /// Derivative along `x′/|x′|`.
    pub dr: Csr<f64>,
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    pub interior_index: Vec<Option<usize>>,
    pub boundary_index: Vec<Option<usize>>,
}

/// Gradients of the four barycentric functions of a tetrahedron.
pub fn barycentric_gradients(p: [[f64; 3]; 4]) -> ([[f64; 3]; 4], f64) {
    let e = |k: usize| [p[k][0] - p[0][0], p[k][1] - p[0][1], p[k][2] - p[0][2]];
    let (e1, e2, e3) = (e(1), e(2), e(3));
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let c23 = cross(e2, e3);
    let six_v = e1[0] * c23[0] + e1[1] * c23[1] + e1[2] * c23[2];
    let g1 = c23.map(|v| v / six_v);
    let g2 = cross(e3, e1).map(|v| v / six_v);
    let g3 = cross(e1, e2).map(|v| v / six_v);
    let g0 = [0, 1, 2].map(|k| -(g1[k] + g2[k] + g3[k]));
    ([g0, g1, g2, g3], six_v.abs() / 6.0)
}

/// `∫ c ∇φᵢ·∇φⱼ` with a piecewise-constant coefficient per tetrahedron.
pub fn assemble_stiffness(mesh: &Mesh, coefficient: &[f64]) -> Csr<f64> {
    let n = mesh.n_vertices();
    let mut t = Vec::with_capacity(16 * mesh.tets.len());
    for (e, tet) in mesh.tets.iter().enumerate() {
        let (g, vol) = barycentric_gradients(tet.map(|v| mesh.vertices[v]));
        for a in 0..4 {
            for b in 0..4 {
                let k = coefficient[e] * vol * (g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2]);
                t.push((tet[a], tet[b], k));
            }
        }
    }
    Csr::from_triplets(n, n, t)
}

pub fn assemble_operators(mesh: &Mesh) -> Result<OperatorSet> {
    let n = mesh.n_vertices();
    let mut mass = vec![0.0; n];
    for (e, tet) in mesh.tets.iter().enumerate() {
        let vol = mesh.tet_volume(e);
        if vol <= 0.0 {
            return Err(ReconError::DegenerateElement { index: e, volume: vol });
        }
        for &v in tet {
            mass[v] += vol / 4.0;
        }
    }
    let stiffness = assemble_stiffness(mesh, &vec![1.0; mesh.tets.len()]);
    let mut boundary_mass = vec![0.0; mesh.n_boundary()];
    for f in &mesh.boundary_faces {
        for &v in &f.vertices {
            let b = mesh.boundary_index[v].expect("face vertex on boundary");
            boundary_mass[b] += f.area / 3.0;
        }
    }
    let grad = gradient_recovery(mesh, &stiffness);
    let mut dr_t = Vec::new();
    for i in 0..n {
        let p = mesh.vertices[i];
        let r = p[1].hypot(p[2]);
        for (j, v) in grad[1].row(i) {
            dr_t.push((i, j, v * p[1] / r));
        }
        for (j, v) in grad[2].row(i) {
            dr_t.push((i, j, v * p[2] / r));
        }
    }
    let dr = Csr::from_triplets(n, n, dr_t);
    Ok(OperatorSet {
        stiffness,
        mass,
        boundary_mass,
        dx1: grad[0].clone(),
        grad,
        dr,
        interior: mesh.interior_nodes.clone(),
        boundary: mesh.boundary_nodes.clone(),
        interior_index: mesh.interior_index.clone(),
        boundary_index: mesh.boundary_index.clone(),
    })
}

/// Least-squares gradient fit over each vertex's element neighbours. Exact
/// for linear fields.
fn gradient_recovery(mesh: &Mesh, pattern: &Csr<f64>) -> [Csr<f64>; 3] {
    let n = mesh.n_vertices();
    let mut t: [Vec<(usize, usize, f64)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..n {
        let xi = mesh.vertices[i];
        let nbrs: Vec<(usize, [f64; 3])> = pattern
            .row(i)
            .filter(|&(j, _)| j != i)
            .map(|(j, _)| {
                let xj = mesh.vertices[j];
                (j, [xj[0] - xi[0], xj[1] - xi[1], xj[2] - xi[2]])
            })
            .collect();
        let mut g = [[0.0; 3]; 3];
        for (_, d) in &nbrs {
            for a in 0..3 {
                for b in 0..3 {
                    g[a][b] += d[a] * d[b];
                }
            }
        }
        let inv = invert3(g);
        for (j, d) in &nbrs {
            for a in 0..3 {
                let c = inv[a][0] * d[0] + inv[a][1] * d[1] + inv[a][2] * d[2];
                t[a].push((i, *j, c));
                t[a].push((i, i, -c));
            }
        }
    }
    t.map(|tr| Csr::from_triplets(n, n, tr))
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let cof = [
        [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
        [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
        [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
    ];
    let det = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2];
    // inverse = adjugate / det, adjugate = cofactorᵀ
    let mut inv = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            inv[a][b] = cof[b][a] / det;
        }
    }
    inv
}

impl OperatorSet {
    pub fn n(&self) -> usize {
        self.mass.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    /// `Δ_h u = −M⁻¹ K u` on every row.
    pub fn laplacian(&self, u: &[c64]) -> Vec<c64> {
        let ku = self.stiffness.apply(u);
        ku.iter().zip(&self.mass).map(|(k, m)| -k / *m).collect()
    }

    pub fn trace(&self, u: &[c64]) -> Vec<c64> {
        self.boundary.iter().map(|&v| u[v]).collect()
    }

    /// Extension by zero of a boundary vector.
    pub fn extend(&self, b: &[c64]) -> Vec<c64> {
        let mut u = vec![ZERO; self.n()];
        for (k, &v) in self.boundary.iter().enumerate() {
            u[v] = b[k];
        }
        u
    }

    /// `Tr* h = M⁻¹ Trᵀ M∂ h`, the trace adjoint in the `(M∂, M)` pairing.
    pub fn trace_adjoint(&self, h: &[c64]) -> Vec<c64> {
        let mut u = vec![ZERO; self.n()];
        for (k, &v) in self.boundary.iter().enumerate() {
            u[v] = h[k] * (self.boundary_mass[k] / self.mass[v]);
        }
        u
    }

    pub fn mass_inner(&self, u: &[c64], v: &[c64]) -> c64 {
        crate::linalg::inner(&self.mass, u, v)
    }

    pub fn mass_norm(&self, u: &[c64]) -> f64 {
        crate::linalg::norm(&self.mass, u)
    }

    pub fn boundary_norm(&self, b: &[c64]) -> f64 {
        crate::linalg::norm(&self.boundary_mass, b)
    }

    /// Bilinear boundary pairing `Σ M∂ g f` (no conjugation).
    pub fn boundary_pairing(&self, g: &[c64], f: &[c64]) -> c64 {
        self.boundary_mass.iter().zip(g.iter().zip(f)).map(|(&w, (a, b))| a * b * w).sum()
    }
}

/// Analytic descriptions of a potential, or a nodal table on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PotentialDescriptor {
    Gaussian { amplitude: [f64; 2], center: [f64; 3], width: f64 },
    Ball { amplitude: [f64; 2], center: [f64; 3], radius: f64 },
    Constant { value: [f64; 2] },
    /// CSV rows `(vertex_index, re, im)`; relative paths resolve against the config.
    Nodal { file: PathBuf },
}

impl Default for PotentialDescriptor {
    fn default() -> Self {
        PotentialDescriptor::Gaussian { amplitude: [2.0, 0.0], center: [0.0, 3.0, 0.0], width: 0.3 }
    }
}

#[derive(Debug, Clone)]
pub struct Potential {
    pub values: Vec<c64>,
    pub descriptor: Option<PotentialDescriptor>,
}

impl Potential {
    pub fn zero(n: usize) -> Self {
        Potential { values: vec![ZERO; n], descriptor: Some(PotentialDescriptor::Constant { value: [0.0, 0.0] }) }
    }

    pub fn from_values(values: Vec<c64>) -> Self {
        Potential { values, descriptor: None }
    }

    pub fn from_descriptor(desc: &PotentialDescriptor, mesh: &Mesh, base_dir: &Path) -> Result<Self> {
        let n = mesh.n_vertices();
        let values = match desc {
            PotentialDescriptor::Gaussian { amplitude, center, width } => {
                if !(*width > 0.0) {
                    return Err(ReconError::Invalid(format!("gaussian width must be positive, got {width}")));
                }
                let a = c64::new(amplitude[0], amplitude[1]);
                mesh.vertices
                    .iter()
                    .map(|p| {
                        let d2: f64 = (0..3).map(|k| (p[k] - center[k]).powi(2)).sum();
                        a * (-d2 / (2.0 * width * width)).exp()
                    })
                    .collect()
            }
            PotentialDescriptor::Ball { amplitude, center, radius } => {
                let a = c64::new(amplitude[0], amplitude[1]);
                mesh.vertices
                    .iter()
                    .map(|p| {
                        let d2: f64 = (0..3).map(|k| (p[k] - center[k]).powi(2)).sum();
                        if d2 <= radius * radius {
                            a
                        } else {
                            ZERO
                        }
                    })
                    .collect()
            }
            PotentialDescriptor::Constant { value } => vec![c64::new(value[0], value[1]); n],
            PotentialDescriptor::Nodal { file } => {
                let path = if file.is_absolute() { file.clone() } else { base_dir.join(file) };
                read_nodal_csv(&path, n)?
            }
        };
        Ok(Potential { values, descriptor: Some(desc.clone()) })
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == ZERO)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.norm()))
    }
}

/// Reads `(vertex_index, re, im)` rows; unlisted vertices stay zero.
pub fn read_nodal_csv(path: &Path, n: usize) -> Result<Vec<c64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut values = vec![ZERO; n];
    for rec in reader.records() {
        let rec = rec?;
        if rec.get(0).is_some_and(|s| s.parse::<usize>().is_err()) {
            continue; // header line
        }
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| ReconError::Invalid(format!("{}: short row", path.display())))?
                .parse::<f64>()
                .map_err(|e| ReconError::Invalid(format!("{}: {e}", path.display())))
        };
        let v = parse(0)? as usize;
        if v >= n {
            return Err(ReconError::Invalid(format!("{}: vertex {v} out of range", path.display())));
        }
        values[v] = c64::new(parse(1)?, parse(2)?);
    }
    Ok(values)
}

/// Factored `(−Δ + q)` with zero Dirichlet data, in weak form `K + M q`.
pub struct DirichletSolver<'a> {
    ops: &'a OperatorSet,
    q: Vec<c64>,
    factor: GeneralFactor,
    pub condition: f64,
}

impl<'a> DirichletSolver<'a> {
    pub fn new(ops: &'a OperatorSet, q: &Potential) -> Result<Self> {
        if q.values.len() != ops.n() {
            return Err(ReconError::Mismatch("potential length differs from vertex count".into()));
        }
        let ni = ops.n_interior();
        let sub = ops.stiffness.submatrix(&ops.interior, &ops.interior_index, ni);
        let real = q.is_real();
        let mut t_real = Vec::new();
        let mut t_cplx = Vec::new();
        for (i, j, k) in sub.triplets() {
            t_real.push((i, j, k));
            t_cplx.push((i, j, c64::new(k, 0.0)));
        }
        for (i, &v) in ops.interior.iter().enumerate() {
            let d = q.values[v] * ops.mass[v];
            t_real.push((i, i, d.re));
            t_cplx.push((i, i, d));
        }
        let near = |_| ReconError::NearSingular { condition: f64::INFINITY };
        let (factor, matrix) = if real {
            let a = Csr::from_triplets(ni, ni, t_real);
            (GeneralFactor::real(&a).map_err(near)?, a.to_complex())
        } else {
            let a = Csr::from_triplets(ni, ni, t_cplx);
            (GeneralFactor::complex(&a).map_err(near)?, a)
        };
        let inv = inverse_one_norm_estimate(ni, |b| factor.solve(b), |b| factor.solve_adjoint(b));
        let condition = crate::linalg::one_norm(&matrix) * inv;
        if !condition.is_finite() || condition > NEAR_SINGULAR {
            return Err(ReconError::NearSingular { condition });
        }
        Ok(DirichletSolver { ops, q: q.values.clone(), factor, condition })
    }

    /// Solves `(−Δ + q) u = rhs` inside with `tr u = bdata`.
    pub fn solve(&self, rhs: &[c64], bdata: &[c64]) -> Vec<c64> {
        let ops = self.ops;
        let mut u = ops.extend(bdata);
        let ku = ops.stiffness.apply(&u);
        let b: Vec<c64> = ops
            .interior
            .iter()
            .map(|&v| rhs[v] * ops.mass[v] - ku[v] - self.q[v] * ops.mass[v] * u[v])
            .collect();
        let x = self.factor.solve(&b);
        for (k, &v) in ops.interior.iter().enumerate() {
            u[v] = x[k];
        }
        u
    }

    /// `P_q g`: the discrete solution with trace `g`.
    pub fn poisson(&self, g: &[c64]) -> Vec<c64> {
        self.solve(&vec![ZERO; self.ops.n()], g)
    }

    /// `P_q` applied to every column of a boundary-by-k matrix.
    pub fn poisson_mat(&self, g: &Mat<c64>) -> Mat<c64> {
        let ops = self.ops;
        let k = g.ncols();
        let n = ops.n();
        let mut rhs = Mat::<c64>::zeros(ops.n_interior(), k);
        for (bi, &v) in ops.boundary.iter().enumerate() {
            for (i, kij) in ops.stiffness.row(v) {
                if let Some(ii) = ops.interior_index[i] {
                    // K symmetric: K[i, v] = K[v, i]
                    for c in 0..k {
                        rhs[(ii, c)] -= g[(bi, c)] * kij;
                    }
                }
            }
        }
        self.factor.solve_mat(&mut rhs, false);
        let mut out = Mat::<c64>::zeros(n, k);
        for (ii, &v) in ops.interior.iter().enumerate() {
            for c in 0..k {
                out[(v, c)] = rhs[(ii, c)];
            }
        }
        for (bi, &v) in ops.boundary.iter().enumerate() {
            for c in 0..k {
                out[(v, c)] = g[(bi, c)];
            }
        }
        out
    }

    pub fn q(&self) -> &[c64] {
        &self.q
    }
}

pub fn dirichlet_solve(ops: &OperatorSet, q: &Potential, rhs: &[c64], bdata: &[c64]) -> Result<Vec<c64>> {
    Ok(DirichletSolver::new(ops, q)?.solve(rhs, bdata))
}

pub fn poisson_project(ops: &OperatorSet, q: &Potential, g: &[c64]) -> Result<Vec<c64>> {
    Ok(DirichletSolver::new(ops, q)?.poisson(g))
}

/// Weak conormal derivative: `M∂⁻¹ [(K + M q) u − M rhs]` on boundary rows.
pub fn normal_derivative(ops: &OperatorSet, u: &[c64], q: &[c64], rhs: &[c64]) -> Vec<c64> {
    ops.boundary
        .iter()
        .enumerate()
        .map(|(b, &v)| {
            let mut acc = ZERO;
            for (j, k) in ops.stiffness.row(v) {
                acc += u[j] * k;
            }
            acc += (q[v] * u[v] - rhs[v]) * ops.mass[v];
            acc / ops.boundary_mass[b]
        })
        .collect()
}

/// Nodal `(∂z̄ u, ∂z u)` with `∂z̄ = (∂x1 + i ∂r)/2`.
pub fn complex_derivatives(ops: &OperatorSet, _frame: &CoordinateFrame, u: &[c64]) -> (Vec<c64>, Vec<c64>) {
    let d1 = ops.dx1.apply(u);
    let dr = ops.dr.apply(u);
    let dzbar = d1.iter().zip(&dr).map(|(a, b)| (a + I * b) * 0.5).collect();
    let dz = d1.iter().zip(&dr).map(|(a, b)| (a - I * b) * 0.5).collect();
    (dzbar, dz)
}

/// `‖∇(u − I_h u)‖` over the polyhedral domain with a 4-point rule.
pub fn h1_interpolation_error(mesh: &Mesh, u: impl Fn([f64; 3]) -> f64, grad: impl Fn([f64; 3]) -> [f64; 3]) -> f64 {
    let (a, b) = (0.585_410_196_624_968_5, 0.138_196_601_125_010_5);
    let mut total = 0.0;
    for tet in &mesh.tets {
        let p = tet.map(|v| mesh.vertices[v]);
        let (g, vol) = barycentric_gradients(p);
        let mut gh = [0.0; 3];
        for k in 0..4 {
            let uk = u(p[k]);
            for c in 0..3 {
                gh[c] += uk * g[k][c];
            }
        }
        for q in 0..4 {
            let w: [f64; 4] = std::array::from_fn(|k| if k == q { a } else { b });
            let x = [0, 1, 2].map(|c| (0..4).map(|k| w[k] * p[k][c]).sum::<f64>());
            let ge = grad(x);
            total += vol / 4.0 * (0..3).map(|c| (gh[c] - ge[c]).powi(2)).sum::<f64>();
        }
    }
    total.sqrt()
}
