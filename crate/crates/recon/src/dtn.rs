//! Dirichlet-to-Neumann matrices and the mask-guarded view that the
//! reconstruction is allowed to read.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{assemble_stiffness, DirichletSolver, OperatorSet, Potential};
use crate::error::{ReconError, Result};
use crate::geometry::{BoundaryPartition, Mesh};
use crate::linalg::{c64, random_complex, GeneralFactor, ZERO};

#[derive(Debug, Clone)]
pub struct DtnOperator {
    /// Boundary-by-boundary, acting on nodal Dirichlet data.
    pub matrix: Mat<c64>,
    pub tag: String,
}

/// `M∂⁻¹ [K_BB + M_B q_B + K_BI X]` with `X` the interior part of `P_q`.
pub fn assemble_dtn(ops: &OperatorSet, q: &Potential) -> Result<DtnOperator> {
    let solver = DirichletSolver::new(ops, q)?;
    let nb = ops.n_boundary();
    let p = solver.poisson_mat(&Mat::<c64>::identity(nb, nb));
    let mut b = Mat::<c64>::zeros(nb, nb);
    for (bi, &v) in ops.boundary.iter().enumerate() {
        for (j, k) in ops.stiffness.row(v) {
            for c in 0..nb {
                b[(bi, c)] += p[(j, c)] * k;
            }
        }
        let qm = q.values[v] * ops.mass[v];
        b[(bi, bi)] += qm;
        let s = 1.0 / ops.boundary_mass[bi];
        for c in 0..nb {
            b[(bi, c)] *= s;
        }
    }
    let tag = if q.is_zero() { "zero".to_string() } else { format!("{:?}", q.descriptor) };
    Ok(DtnOperator { matrix: b, tag })
}

/// DtN map of the conductivity equation `∇·σ∇u = 0`, with `σ` taken
/// per element as the mean of its nodal values.
pub fn assemble_conductivity_dtn(mesh: &Mesh, ops: &OperatorSet, sigma: &[f64]) -> Result<DtnOperator> {
    if sigma.len() != mesh.n_vertices() {
        return Err(ReconError::Mismatch("conductivity length differs from vertex count".into()));
    }
    let coeff: Vec<f64> = mesh.tets.iter().map(|t| t.iter().map(|&v| sigma[v]).sum::<f64>() / 4.0).collect();
    let k = assemble_stiffness(mesh, &coeff);
    let ni = ops.n_interior();
    let nb = ops.n_boundary();
    let kii = k.submatrix(&ops.interior, &ops.interior_index, ni);
    let factor = GeneralFactor::real(&kii).map_err(|_| ReconError::NearSingular { condition: f64::INFINITY })?;
    let mut x = Mat::<c64>::zeros(ni, nb);
    for (bi, &v) in ops.boundary.iter().enumerate() {
        for (i, kv) in k.row(v) {
            if let Some(ii) = ops.interior_index[i] {
                x[(ii, bi)] -= c64::new(kv, 0.0);
            }
        }
    }
    factor.solve_mat(&mut x, false);
    let mut b = Mat::<c64>::zeros(nb, nb);
    for (bi, &v) in ops.boundary.iter().enumerate() {
        for (j, kv) in k.row(v) {
            if let Some(bj) = ops.boundary_index[j] {
                b[(bi, bj)] += kv;
            } else if let Some(ij) = ops.interior_index[j] {
                for c in 0..nb {
                    b[(bi, c)] += x[(ij, c)] * kv;
                }
            }
        }
        let s = 1.0 / ops.boundary_mass[bi];
        for c in 0..nb {
            b[(bi, c)] *= s;
        }
    }
    Ok(DtnOperator { matrix: b, tag: "conductivity".into() })
}

/// `Λ_q = σ^{-1/2} (Λ_σ + ½ ∂σ/∂ν) σ^{-1/2}` with diagonal scalings.
pub fn schrodinger_from_conductivity(b_sigma: &DtnOperator, sigma_b: &[f64], dsigma_dnu: &[f64]) -> Result<DtnOperator> {
    let nb = b_sigma.matrix.nrows();
    if sigma_b.len() != nb || dsigma_dnu.len() != nb {
        return Err(ReconError::Mismatch("boundary data length differs from DtN size".into()));
    }
    let min = sigma_b.iter().fold(f64::INFINITY, |a, &s| a.min(s));
    if !(min > 0.0) {
        return Err(ReconError::NonPositiveConductivity(min));
    }
    let s: Vec<f64> = sigma_b.iter().map(|v| v.powf(-0.5)).collect();
    let mut m = Mat::<c64>::zeros(nb, nb);
    for i in 0..nb {
        for j in 0..nb {
            let mut v = b_sigma.matrix[(i, j)];
            if i == j {
                v += c64::new(0.5 * dsigma_dnu[i], 0.0);
            }
            m[(i, j)] = v * (s[i] * s[j]);
        }
    }
    Ok(DtnOperator { matrix: m, tag: "schrodinger-from-conductivity".into() })
}

#[derive(Debug, Clone)]
pub struct DtnDifference {
    pub matrix: Mat<c64>,
}

pub fn dtn_difference(bq: &DtnOperator, b0: &DtnOperator) -> Result<DtnDifference> {
    if bq.matrix.nrows() != b0.matrix.nrows() || bq.matrix.ncols() != b0.matrix.ncols() {
        return Err(ReconError::Mismatch("DtN operators come from different meshes".into()));
    }
    Ok(DtnDifference { matrix: &bq.matrix - &b0.matrix })
}

pub fn apply_mat(m: &Mat<c64>, f: &[c64]) -> Vec<c64> {
    let n = m.nrows();
    let mut y = vec![ZERO; n];
    for j in 0..m.ncols() {
        let fj = f[j];
        if fj == ZERO {
            continue;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += m[(i, j)] * fj;
        }
    }
    y
}

/// Worst relative defect of `gᵀM∂Df = (P₀g)ᵀ M q (P_q f)` over random pairs.
pub fn alessandrini_check(
    ops: &OperatorSet,
    d: &DtnDifference,
    p0: &DirichletSolver,
    pq: &DirichletSolver,
    pairs: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = ops.n_boundary();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let f = random_complex(&mut rng, nb);
        let g = random_complex(&mut rng, nb);
        let lhs = ops.boundary_pairing(&g, &apply_mat(&d.matrix, &f));
        let u0 = p0.poisson(&g);
        let uq = pq.poisson(&f);
        let q = pq.q();
        let rhs: c64 = (0..ops.n()).map(|v| u0[v] * q[v] * uq[v] * ops.mass[v]).sum();
        let scale = lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).norm() / scale);
    }
    worst
}

/// The only handle on `Λ_q − Λ₀` that reconstruction code receives. Rows
/// are readable on `F̃`, columns on `B̃`; anything else is refused.
#[derive(Debug)]
pub struct PartialDtnView {
    matrix: Mat<c64>,
    boundary_mass: Vec<f64>,
    pub input_mask: Vec<bool>,
    pub output_mask: Vec<bool>,
    reads: AtomicUsize,
    violations: AtomicUsize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub boundary_vertices: Vec<usize>,
    pub input_mask_b_tilde: Vec<bool>,
    pub output_mask_f_tilde: Vec<bool>,
}

/// Consumes the full difference; out-of-mask entries are dropped here.
pub fn mask_partial(d: DtnDifference, ops: &OperatorSet, partition: &BoundaryPartition) -> PartialDtnView {
    let nb = d.matrix.nrows();
    let matrix = Mat::from_fn(nb, nb, |i, j| {
        if partition.f_tilde[i] && partition.b_tilde[j] {
            d.matrix[(i, j)]
        } else {
            ZERO
        }
    });
    PartialDtnView {
        matrix,
        boundary_mass: ops.boundary_mass.clone(),
        input_mask: partition.b_tilde.clone(),
        output_mask: partition.f_tilde.clone(),
        reads: AtomicUsize::new(0),
        violations: AtomicUsize::new(0),
    }
}

impl PartialDtnView {
    fn violation(&self, msg: String) -> ReconError {
        self.violations.fetch_add(1, Ordering::Relaxed);
        ReconError::MaskViolation(msg)
    }

    pub fn entry(&self, i: usize, j: usize) -> Result<c64> {
        if !self.output_mask[i] || !self.input_mask[j] {
            return Err(self.violation(format!("entry ({i}, {j}) lies outside F̃ x B̃")));
        }
        self.reads.fetch_add(1, Ordering::Relaxed);
        Ok(self.matrix[(i, j)])
    }

    fn check_input(&self, f: &[c64]) -> Result<()> {
        if let Some(j) = f.iter().zip(&self.input_mask).position(|(v, &m)| !m && *v != ZERO) {
            return Err(self.violation(format!("input supported at boundary node {j} outside B̃")));
        }
        Ok(())
    }

    /// `(D f)|_{F̃}` for `f` supported in `B̃`; entries off `F̃` are zero.
    pub fn apply(&self, f: &[c64]) -> Result<Vec<c64>> {
        self.check_input(f)?;
        let nb = f.len();
        let mut y = vec![ZERO; nb];
        for j in (0..nb).filter(|&j| self.input_mask[j] && f[j] != ZERO) {
            for i in (0..nb).filter(|&i| self.output_mask[i]) {
                y[i] += self.matrix[(i, j)] * f[j];
            }
        }
        self.reads.fetch_add(1, Ordering::Relaxed);
        Ok(y)
    }

    /// Bilinear pairing `gᵀ M∂ D f`.
    pub fn pair(&self, g: &[c64], f: &[c64]) -> Result<c64> {
        if let Some(i) = g.iter().zip(&self.output_mask).position(|(v, &m)| !m && *v != ZERO) {
            return Err(self.violation(format!("test function supported at boundary node {i} outside F̃")));
        }
        let df = self.apply(f)?;
        Ok(g.iter().zip(&df).zip(&self.boundary_mass).map(|((a, b), w)| a * b * w).sum())
    }

    /// Dense block on the requested rows and columns, checked against the masks.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Result<Mat<c64>> {
        if let Some(&i) = rows.iter().find(|&&i| !self.output_mask[i]) {
            return Err(self.violation(format!("row {i} outside F̃")));
        }
        if let Some(&j) = cols.iter().find(|&&j| !self.input_mask[j]) {
            return Err(self.violation(format!("column {j} outside B̃")));
        }
        self.reads.fetch_add(rows.len() * cols.len(), Ordering::Relaxed);
        Ok(Mat::from_fn(rows.len(), cols.len(), |a, b| self.matrix[(rows[a], cols[b])]))
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn violations(&self) -> usize {
        self.violations.load(Ordering::Relaxed)
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Writes in-mask entries as `(row, col, re, im)` plus a JSON mask sidecar.
    pub fn export(&self, csv_path: &Path, sidecar: &Path, boundary_vertices: &[usize]) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(["row", "col", "re", "im"])?;
        let nb = self.size();
        for i in (0..nb).filter(|&i| self.output_mask[i]) {
            for j in (0..nb).filter(|&j| self.input_mask[j]) {
                let v = self.matrix[(i, j)];
                w.write_record([i.to_string(), j.to_string(), format!("{:e}", v.re), format!("{:e}", v.im)])?;
            }
        }
        w.flush()?;
        let doc = MaskSidecar {
            boundary_vertices: boundary_vertices.to_vec(),
            input_mask_b_tilde: self.input_mask.clone(),
            output_mask_f_tilde: self.output_mask.clone(),
        };
        let mut f = std::fs::File::create(sidecar)?;
        f.write_all(serde_json::to_string_pretty(&doc)?.as_bytes())?;
        Ok(())
    }
}

/// Writes every entry as `(row, col, re, im)`.
pub fn export_matrix_csv(m: &Mat<c64>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "col", "re", "im"])?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            w.write_record([i.to_string(), j.to_string(), format!("{:e}", v.re), format!("{:e}", v.im)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Conductivity models with an analytic boundary flux.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConductivityDescriptor {
    Constant { value: f64 },
    /// `σ = exp(rate · x1)`.
    ExpX1 { rate: f64 },
}

impl ConductivityDescriptor {
    pub fn nodal(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.vertices
            .iter()
            .map(|p| match self {
                ConductivityDescriptor::Constant { value } => *value,
                ConductivityDescriptor::ExpX1 { rate } => (rate * p[0]).exp(),
            })
            .collect()
    }

    /// `∂σ/∂ν` at boundary nodes with the exact sphere normal.
    pub fn boundary_flux(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.boundary_nodes
            .iter()
            .map(|&v| match self {
                ConductivityDescriptor::Constant { .. } => 0.0,
                ConductivityDescriptor::ExpX1 { rate } => rate * (rate * mesh.vertices[v][0]).exp() * mesh.vertex_normal(v)[0],
            })
            .collect()
    }

    /// The Schrödinger potential `Δ√σ / √σ`.
    pub fn schrodinger_potential(&self) -> f64 {
        match self {
            ConductivityDescriptor::Constant { .. } => 0.0,
            ConductivityDescriptor::ExpX1 { rate } => rate * rate / 4.0,
        }
    }
}

/// `Λ_q` through the conductivity reduction, boundary flux supplied by the caller.
pub fn conductivity_route(
    mesh: &Mesh,
    ops: &OperatorSet,
    sigma: &[f64],
    dsigma_dnu: &[f64],
) -> Result<DtnOperator> {
    let b_sigma = assemble_conductivity_dtn(mesh, ops, sigma)?;
    let sigma_b: Vec<f64> = mesh.boundary_nodes.iter().map(|&v| sigma[v]).collect();
    schrodinger_from_conductivity(&b_sigma, &sigma_b, dsigma_dnu)
}

/// True when the view holds nothing outside its masks.
pub fn view_is_quarantined(view: &PartialDtnView) -> bool {
    let nb = view.size();
    (0..nb).all(|i| {
        (0..nb).all(|j| (view.output_mask[i] && view.input_mask[j]) || view.matrix[(i, j)] == ZERO)
    })
}
