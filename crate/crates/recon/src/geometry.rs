//! Ball domain offset from the x1-axis, its tetrahedral mesh, the complex
//! (x1, r) frame and the front/back boundary split used by every weighted
//! construction downstream.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ReconError, Result};
use crate::linalg::{c64, I};

/// Floor applied to the boundary weight before it appears as `1/γ²`.
pub const GAMMA_MIN: f64 = 1e-6;

/// Nodes with `|x·ν| ≤ EQUATOR_TOL` count as lying on both boundary halves.
pub const EQUATOR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainSpec {
    /// Distance of the ball center from the x1-axis.
    pub center_offset: f64,
    pub radius: f64,
    pub refinement_level: usize,
    pub dimension: usize,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec { center_offset: 3.0, radius: 1.0, refinement_level: 2, dimension: 3 }
    }
}

impl DomainSpec {
    pub fn new(center_offset: f64, radius: f64, refinement_level: usize) -> Self {
        DomainSpec { center_offset, radius, refinement_level, dimension: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 3 {
            return Err(ReconError::UnsupportedDimension(self.dimension));
        }
        if !(self.radius > 0.0 && self.center_offset > self.radius) {
            return Err(ReconError::DomainTouchesAxis { offset: self.center_offset, radius: self.radius });
        }
        Ok(())
    }

    pub fn center(&self) -> [f64; 3] {
        [0.0, self.center_offset, 0.0]
    }

    /// Cells per cube edge before the cube is inflated to the ball.
    pub fn cells_per_edge(&self) -> usize {
        4 << self.refinement_level
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryFace {
    pub vertices: [usize; 3],
    pub normal: [f64; 3],
    pub area: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
    pub boundary_faces: Vec<BoundaryFace>,
    /// Boundary vertices in increasing vertex order.
    pub boundary_nodes: Vec<usize>,
    /// Vertex index -> position in `boundary_nodes`.
    pub boundary_index: Vec<Option<usize>>,
    pub interior_nodes: Vec<usize>,
    pub interior_index: Vec<Option<usize>>,
    pub center: [f64; 3],
    pub radius: f64,
}

/// On-disk mesh layout; indices are 0-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshDocument {
    pub vertices: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
    pub boundary_faces: Vec<[usize; 3]>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn length(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub fn signed_volume(p: [[f64; 3]; 4]) -> f64 {
    dot(sub(p[1], p[0]), cross(sub(p[2], p[0]), sub(p[3], p[0]))) / 6.0
}

/// Maps a point of the cube `[-1,1]³` onto the ball. Cube shells become
/// spheres; the tangent warp evens out the cells on each shell.
fn cube_to_ball(p: [f64; 3], center: [f64; 3], radius: f64) -> [f64; 3] {
    let m = p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        return center;
    }
    let w = p.map(|v| (PI * v / (4.0 * m)).tan());
    let s = radius * m / length(w);
    [center[0] + s * w[0], center[1] + s * w[1], center[2] + s * w[2]]
}

/// Structured ball mesh. Each cube cell is split into six tetrahedra along
/// a diagonal that points away from the cube center, which keeps the mesh
/// conforming and mirror-symmetric in every coordinate plane of the cube.
pub fn build_ball_mesh(spec: &DomainSpec) -> Result<Mesh> {
    spec.validate()?;
    let n = spec.cells_per_edge();
    let center = spec.center();
    let id = |i: usize, j: usize, k: usize| (i * (n + 1) + j) * (n + 1) + k;
    let mut vertices = Vec::with_capacity((n + 1).pow(3));
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                let p = [i, j, k].map(|l| 2.0 * l as f64 / n as f64 - 1.0);
                vertices.push(cube_to_ball(p, center, spec.radius));
            }
        }
    }
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::with_capacity(6 * n.pow(3));
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let lo = [i, j, k];
                let mut origin = [0usize; 3];
                let mut step = [0isize; 3];
                for a in 0..3 {
                    // cell midpoint coordinate is positive iff 2*lo + 1 > n
                    if 2 * lo[a] + 1 > n {
                        origin[a] = lo[a];
                        step[a] = 1;
                    } else {
                        origin[a] = lo[a] + 1;
                        step[a] = -1;
                    }
                }
                for perm in perms {
                    let mut v = origin;
                    let mut t = [id(v[0], v[1], v[2]); 4];
                    for (s, &a) in perm.iter().enumerate() {
                        v[a] = (v[a] as isize + step[a]) as usize;
                        t[s + 1] = id(v[0], v[1], v[2]);
                    }
                    let p = t.map(|x| vertices[x]);
                    if signed_volume(p) < 0.0 {
                        t.swap(2, 3);
                    }
                    tets.push(t);
                }
            }
        }
    }
    assemble_mesh(vertices, tets, center, spec.radius)
}

fn assemble_mesh(vertices: Vec<[f64; 3]>, tets: Vec<[usize; 4]>, center: [f64; 3], radius: f64) -> Result<Mesh> {
    for (index, t) in tets.iter().enumerate() {
        let volume = signed_volume(t.map(|x| vertices[x]));
        if volume.abs() < 1e-14 * radius.powi(3) {
            return Err(ReconError::DegenerateElement { index, volume });
        }
    }
    let mut face_count: HashMap<[usize; 3], usize> = HashMap::new();
    for t in &tets {
        for skip in 0..4 {
            let mut f = [0usize; 3];
            let mut c = 0;
            for (s, &v) in t.iter().enumerate() {
                if s != skip {
                    f[c] = v;
                    c += 1;
                }
            }
            f.sort_unstable();
            *face_count.entry(f).or_default() += 1;
        }
    }
    let mut faces: Vec<[usize; 3]> = face_count.into_iter().filter(|&(_, c)| c == 1).map(|(f, _)| f).collect();
    faces.sort_unstable();
    let boundary_faces = faces.into_iter().map(|f| oriented_face(f, &vertices, center)).collect();
    Ok(finish_mesh(vertices, tets, boundary_faces, center, radius))
}

fn oriented_face(mut f: [usize; 3], vertices: &[[f64; 3]], center: [f64; 3]) -> BoundaryFace {
    let [a, b, c] = f.map(|x| vertices[x]);
    let mut nrm = cross(sub(b, a), sub(c, a));
    let area = 0.5 * length(nrm);
    let centroid = [0, 1, 2].map(|k| (a[k] + b[k] + c[k]) / 3.0);
    if dot(nrm, sub(centroid, center)) < 0.0 {
        nrm = nrm.map(|v| -v);
        f.swap(1, 2);
    }
    let l = length(nrm);
    BoundaryFace { vertices: f, normal: nrm.map(|v| v / l), area }
}

fn finish_mesh(
    vertices: Vec<[f64; 3]>,
    tets: Vec<[usize; 4]>,
    boundary_faces: Vec<BoundaryFace>,
    center: [f64; 3],
    radius: f64,
) -> Mesh {
    let nv = vertices.len();
    let mut on_boundary = vec![false; nv];
    for f in &boundary_faces {
        for &v in &f.vertices {
            on_boundary[v] = true;
        }
    }
    let mut boundary_nodes = Vec::new();
    let mut interior_nodes = Vec::new();
    let mut boundary_index = vec![None; nv];
    let mut interior_index = vec![None; nv];
    for v in 0..nv {
        if on_boundary[v] {
            boundary_index[v] = Some(boundary_nodes.len());
            boundary_nodes.push(v);
        } else {
            interior_index[v] = Some(interior_nodes.len());
            interior_nodes.push(v);
        }
    }
    Mesh { vertices, tets, boundary_faces, boundary_nodes, boundary_index, interior_nodes, interior_index, center, radius }
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary_nodes.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary_index[v].is_some()
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(self.tets[t].map(|x| self.vertices[x]))
    }

    pub fn volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    /// Exact outward unit normal of the ball at a boundary vertex.
    pub fn vertex_normal(&self, v: usize) -> [f64; 3] {
        sub(self.vertices[v], self.center).map(|x| x / self.radius)
    }

    /// Largest edge length, the mesh size `h`.
    pub fn max_edge(&self) -> f64 {
        let mut h = 0.0f64;
        for t in &self.tets {
            for a in 0..4 {
                for b in a + 1..4 {
                    h = h.max(length(sub(self.vertices[t[a]], self.vertices[t[b]])));
                }
            }
        }
        h
    }

    pub fn to_document(&self) -> MeshDocument {
        MeshDocument {
            vertices: self.vertices.clone(),
            tets: self.tets.clone(),
            boundary_faces: self.boundary_faces.iter().map(|f| f.vertices).collect(),
        }
    }

    /// Rebuilds a mesh from its document; center and radius come from the spec.
    pub fn from_document(doc: MeshDocument, spec: &DomainSpec) -> Result<Mesh> {
        spec.validate()?;
        let nv = doc.vertices.len();
        for t in &doc.tets {
            if t.iter().any(|&v| v >= nv) {
                return Err(ReconError::Invalid(format!("tet {t:?} references a missing vertex")));
            }
        }
        let center = spec.center();
        let faces = doc
            .boundary_faces
            .into_iter()
            .map(|f| {
                if f.iter().any(|&v| v >= nv) {
                    return Err(ReconError::Invalid(format!("face {f:?} references a missing vertex")));
                }
                Ok(oriented_face(f, &doc.vertices, center))
            })
            .collect::<Result<Vec<_>>>()?;
        for (index, t) in doc.tets.iter().enumerate() {
            let volume = signed_volume(t.map(|x| doc.vertices[x]));
            if volume.abs() < 1e-14 * spec.radius.powi(3) {
                return Err(ReconError::DegenerateElement { index, volume });
            }
        }
        Ok(finish_mesh(doc.vertices, doc.tets, faces, center, spec.radius))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, &self.to_document())?;
        Ok(())
    }

    pub fn read_json(path: &Path, spec: &DomainSpec) -> Result<Mesh> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let doc: MeshDocument = serde_json::from_reader(f)?;
        Mesh::from_document(doc, spec)
    }
}

/// Per-vertex cylindrical coordinates around the x1-axis.
#[derive(Debug, Clone)]
pub struct CoordinateFrame {
    pub x1: Vec<f64>,
    pub r: Vec<f64>,
    /// Angle in `[0, 2π)` measured from the x2 direction.
    pub theta: Vec<f64>,
    pub z: Vec<c64>,
    /// `z / (i d)`, the scaled weight base.
    pub zeta: Vec<c64>,
    pub dimension: usize,
}

pub fn compute_coordinates(mesh: &Mesh, spec: &DomainSpec) -> CoordinateFrame {
    let zc = I * spec.center_offset;
    let mut frame = CoordinateFrame {
        x1: Vec::new(),
        r: Vec::new(),
        theta: Vec::new(),
        z: Vec::new(),
        zeta: Vec::new(),
        dimension: spec.dimension,
    };
    for p in &mesh.vertices {
        let r = p[1].hypot(p[2]);
        let th = p[2].atan2(p[1]).rem_euclid(2.0 * PI);
        let z = c64::new(p[0], r);
        frame.x1.push(p[0]);
        frame.r.push(r);
        frame.theta.push(th);
        frame.z.push(z);
        frame.zeta.push(z / zc);
    }
    frame
}

impl CoordinateFrame {
    /// Angles of one tetrahedron shifted onto a common branch.
    pub fn aligned_theta(&self, tet: &[usize; 4]) -> [f64; 4] {
        let base = self.theta[tet[0]];
        tet.map(|v| {
            let mut t = self.theta[v];
            while t - base > PI {
                t -= 2.0 * PI;
            }
            while base - t > PI {
                t += 2.0 * PI;
            }
            t
        })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Which half of the boundary a weighted problem leaves free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn of(tau: f64) -> Side {
        if tau > 0.0 {
            Side::Plus
        } else {
            Side::Minus
        }
    }

    pub fn flip(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }
}

/// All masks are indexed by boundary position (see `Mesh::boundary_nodes`).
#[derive(Debug, Clone)]
pub struct BoundaryPartition {
    pub delta: f64,
    pub x_dot_nu: Vec<f64>,
    /// `x·ν / |x|`, the quantity thresholded by the masks.
    pub ratio: Vec<f64>,
    pub gamma_plus: Vec<bool>,
    pub gamma_minus: Vec<bool>,
    pub f_tilde: Vec<bool>,
    pub b_tilde: Vec<bool>,
    pub b_tilde_tilde: Vec<bool>,
    pub gamma: Vec<f64>,
    pub gamma_clamped: Vec<f64>,
}

pub fn partition_boundary(mesh: &Mesh, delta: f64) -> Result<BoundaryPartition> {
    if !(delta > 0.0) {
        return Err(ReconError::MarginNotPositive(delta));
    }
    let mut x_dot_nu = Vec::with_capacity(mesh.n_boundary());
    let mut ratio = Vec::with_capacity(mesh.n_boundary());
    for &v in &mesh.boundary_nodes {
        let x = mesh.vertices[v];
        let xn = dot(x, mesh.vertex_normal(v));
        x_dot_nu.push(xn);
        ratio.push(xn / length(x));
    }
    let max_abs = ratio.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let f_tilde: Vec<bool> = ratio.iter().map(|&r| r < delta).collect();
    let b_tilde: Vec<bool> = ratio.iter().map(|&r| r > -delta).collect();
    if delta >= max_abs || f_tilde.iter().all(|&b| b) || b_tilde.iter().all(|&b| b) {
        return Err(ReconError::MarginTooLarge { delta });
    }
    let (gamma, gamma_clamped) = carleman_weight_raw(mesh, &x_dot_nu);
    Ok(BoundaryPartition {
        delta,
        gamma_plus: x_dot_nu.iter().map(|&x| x >= -EQUATOR_TOL).collect(),
        gamma_minus: x_dot_nu.iter().map(|&x| x <= EQUATOR_TOL).collect(),
        b_tilde_tilde: ratio.iter().map(|&r| r > -delta / 2.0).collect(),
        f_tilde,
        b_tilde,
        x_dot_nu,
        ratio,
        gamma,
        gamma_clamped,
    })
}

fn carleman_weight_raw(mesh: &Mesh, x_dot_nu: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let gamma: Vec<f64> = mesh
        .boundary_nodes
        .iter()
        .zip(x_dot_nu)
        .map(|(&v, &xn)| xn.abs().sqrt() / length(mesh.vertices[v]))
        .collect();
    let clamped = gamma.iter().map(|&g| g.max(GAMMA_MIN)).collect();
    (gamma, clamped)
}

/// `γ = sqrt|x·ν|/|x|` per boundary node, and its clamped version.
pub fn carleman_weight(partition: &BoundaryPartition) -> (Vec<f64>, Vec<f64>) {
    (partition.gamma.clone(), partition.gamma_clamped.clone())
}

impl BoundaryPartition {
    /// Boundary nodes a weighted problem of the given sign leaves free.
    /// Equator nodes go to the plus side so the two halves are disjoint.
    pub fn free_side(&self, side: Side) -> Vec<bool> {
        match side {
            Side::Plus => self.gamma_plus.clone(),
            Side::Minus => self.gamma_plus.iter().map(|&p| !p).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ratio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratio.is_empty()
    }
}

/// `3t² − 2t³` on `t` clipped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

#[derive(Debug, Clone)]
pub struct CutoffPair {
    pub chi_plus: Vec<f64>,
    pub chi_minus: Vec<f64>,
    pub band: f64,
}

/// `χ₊` ramps from 1 at `x·ν/|x| = −δ` down to 0 at `−δ + band`; `χ₋` is
/// its mirror image. With `band < δ/2` the support of `χ₊` stays off `B̃̃`.
pub fn cutoff_functions(partition: &BoundaryPartition, band: f64) -> Result<CutoffPair> {
    let delta = partition.delta;
    if !(band > 0.0 && band < delta / 2.0) {
        return Err(ReconError::BandTooWide { band, delta });
    }
    let chi_plus = partition.ratio.iter().map(|&r| smoothstep((band - delta - r) / band)).collect();
    let chi_minus = partition.ratio.iter().map(|&r| smoothstep((r - delta + band) / band)).collect();
    Ok(CutoffPair { chi_plus, chi_minus, band })
}

impl CutoffPair {
    pub fn side(&self, side: Side) -> &[f64] {
        match side {
            Side::Plus => &self.chi_plus,
            Side::Minus => &self.chi_minus,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_center_maps_to_ball_center() {
        let c = [0.0, 3.0, 0.0];
        assert_eq!(cube_to_ball([0.0; 3], c, 1.0), c);
        let p = cube_to_ball([1.0, 0.3, -0.2], c, 1.0);
        assert!((length(sub(p, c)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn smoothstep_is_c1_ramp() {
        assert_eq!(smoothstep(-1.0), 0.0);
        assert_eq!(smoothstep(2.0), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        let e = 1e-7;
        assert!(((smoothstep(e) - smoothstep(0.0)) / e).abs() < 1e-6);
        assert!(((smoothstep(1.0) - smoothstep(1.0 - e)) / e).abs() < 1e-6);
    }

    #[test]
    fn theta_alignment_removes_wrap() {
        let frame = CoordinateFrame {
            x1: vec![0.0; 4],
            r: vec![1.0; 4],
            theta: vec![0.01, 2.0 * PI - 0.01, 0.02, 2.0 * PI - 0.03],
            z: vec![I; 4],
            zeta: vec![I; 4],
            dimension: 3,
        };
        let a = frame.aligned_theta(&[0, 1, 2, 3]);
        let spread = a.iter().fold(f64::MIN, |m, &v| m.max(v)) - a.iter().fold(f64::MAX, |m, &v| m.min(v));
        assert!(spread < 0.1);
    }
}
