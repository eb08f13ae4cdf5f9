mod common;

use proptest::prelude::*;
use recon::discretization::{DirichletSolver, Potential};
use recon::dtn::*;
use recon::linalg::{c64, ONE, ZERO};
use recon::ReconError;

fn sym_defect(ops: &recon::discretization::OperatorSet, m: &faer::Mat<c64>) -> f64 {
    // M∂ B is symmetric (not Hermitian) for a real mesh.
    let n = m.nrows();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let a = m[(i, j)] * ops.boundary_mass[i];
            let b = m[(j, i)] * ops.boundary_mass[j];
            worst = worst.max((a - b).norm());
            scale = scale.max(a.norm());
        }
    }
    worst / scale
}

#[test]
fn zero_potential_dtn_is_symmetric_and_kills_constants() {
    let l = common::lab(1);
    let b0 = assemble_dtn(&l.ops, &Potential::zero(l.ops.n())).unwrap();
    assert!(sym_defect(&l.ops, &b0.matrix) < 1e-12);
    let ones = vec![ONE; l.ops.n_boundary()];
    let y = apply_mat(&b0.matrix, &ones);
    assert!(y.iter().all(|v| v.norm() < 1e-10));
    // Positive semidefinite in the boundary pairing: ∫ f Λ₀ f = ∫|∇u|² ≥ 0.
    let f: Vec<c64> = l.ops.boundary.iter().map(|&v| c64::new(l.mesh.vertices[v][1] - 3.0, 0.0)).collect();
    assert!(l.ops.boundary_pairing(&f, &apply_mat(&b0.matrix, &f)).re > 0.0);
}

#[test]
fn dtn_of_linear_field_matches_normal_component() {
    // Λ₀ x₁ = ν₁ on the sphere up to discretisation error.
    let l = common::lab(2);
    let b0 = assemble_dtn(&l.ops, &Potential::zero(l.ops.n())).unwrap();
    let f: Vec<c64> = l.ops.boundary.iter().map(|&v| c64::new(l.mesh.vertices[v][0], 0.0)).collect();
    let y = apply_mat(&b0.matrix, &f);
    let exact: Vec<c64> = l.ops.boundary.iter().map(|&v| c64::new(l.mesh.vertex_normal(v)[0], 0.0)).collect();
    let d: Vec<c64> = y.iter().zip(&exact).map(|(a, b)| a - b).collect();
    assert!(l.ops.boundary_norm(&d) / l.ops.boundary_norm(&exact) < 0.1);
}

#[test]
fn alessandrini_identity_holds_to_roundoff() {
    let l = common::lab(1);
    let q = common::gaussian(&l);
    let p0 = DirichletSolver::new(&l.ops, &Potential::zero(l.ops.n())).unwrap();
    let pq = DirichletSolver::new(&l.ops, &q).unwrap();
    let d = dtn_difference(&assemble_dtn(&l.ops, &q).unwrap(), &assemble_dtn(&l.ops, &Potential::zero(l.ops.n())).unwrap()).unwrap();
    assert!(alessandrini_check(&l.ops, &d, &p0, &pq, 20, 7) < 1e-9);
}

fn view(l: &recon::pipeline::Lab) -> PartialDtnView {
    let q = common::gaussian(l);
    let d = dtn_difference(&assemble_dtn(&l.ops, &q).unwrap(), &assemble_dtn(&l.ops, &Potential::zero(l.ops.n())).unwrap()).unwrap();
    mask_partial(d, &l.ops, &l.partition)
}

#[test]
fn masked_view_refuses_and_counts_violations() {
    let l = common::lab(0);
    let v = view(&l);
    assert!(view_is_quarantined(&v));
    let i_out = v.output_mask.iter().position(|m| !m).unwrap();
    let j_in = v.input_mask.iter().position(|m| *m).unwrap();
    let i_in = v.output_mask.iter().position(|m| *m).unwrap();
    assert!(matches!(v.entry(i_out, j_in), Err(ReconError::MaskViolation(_))));
    let mut f = vec![ZERO; v.size()];
    f[v.input_mask.iter().position(|m| !m).unwrap()] = ONE;
    assert!(v.apply(&f).is_err());
    assert!(v.block(&[i_in], &[v.input_mask.iter().position(|m| !m).unwrap()]).is_err());
    assert_eq!(v.violations(), 3);
    assert!(v.entry(i_in, j_in).is_ok());
    assert_eq!(v.reads(), 1);
}

#[test]
fn view_apply_agrees_with_entries() {
    let l = common::lab(0);
    let v = view(&l);
    let f: Vec<c64> = (0..v.size()).map(|j| if v.input_mask[j] { c64::new(j as f64, 1.0) } else { ZERO }).collect();
    let y = v.apply(&f).unwrap();
    for i in 0..v.size() {
        if !v.output_mask[i] {
            assert_eq!(y[i], ZERO);
            continue;
        }
        let s: c64 = (0..v.size()).filter(|&j| v.input_mask[j]).map(|j| v.entry(i, j).unwrap() * f[j]).sum();
        assert!((s - y[i]).norm() <= 1e-12 * (1.0 + s.norm()));
    }
}

#[test]
fn export_writes_only_masked_entries() {
    let l = common::lab(0);
    let v = view(&l);
    let dir = tempfile::tempdir().unwrap();
    let (csv_path, side) = (dir.path().join("d.csv"), dir.path().join("m.json"));
    v.export(&csv_path, &side, &l.ops.boundary).unwrap();
    let rows = csv::Reader::from_path(&csv_path).unwrap().records().count();
    let expected = v.output_mask.iter().filter(|m| **m).count() * v.input_mask.iter().filter(|m| **m).count();
    assert_eq!(rows, expected);
    let doc: MaskSidecar = serde_json::from_str(&std::fs::read_to_string(&side).unwrap()).unwrap();
    assert_eq!(doc.boundary_vertices, l.ops.boundary);
    assert_eq!(doc.input_mask_b_tilde, v.input_mask);
}

#[test]
fn unit_conductivity_reproduces_the_laplace_dtn() {
    let l = common::lab(1);
    let sigma = vec![1.0; l.ops.n()];
    let flux = vec![0.0; l.ops.n_boundary()];
    let a = conductivity_route(&l.mesh, &l.ops, &sigma, &flux).unwrap();
    let b = assemble_dtn(&l.ops, &Potential::zero(l.ops.n())).unwrap();
    let d = &a.matrix - &b.matrix;
    assert!(d.norm_l2() / b.matrix.norm_l2() < 1e-10);
}

#[test]
fn conductivity_route_converges_to_the_schrodinger_dtn() {
    let desc = ConductivityDescriptor::ExpX1 { rate: 1.0 };
    let gaps: Vec<f64> = (0..=1)
        .map(|level| {
            let l = common::lab(level);
            let a = conductivity_route(&l.mesh, &l.ops, &desc.nodal(&l.mesh), &desc.boundary_flux(&l.mesh)).unwrap();
            let q = Potential::from_values(vec![c64::new(desc.schrodinger_potential(), 0.0); l.ops.n()]);
            let b = assemble_dtn(&l.ops, &q).unwrap();
            // Compare on the smooth datum f = 1.
            let ones = vec![ONE; l.ops.n_boundary()];
            let d: Vec<c64> = apply_mat(&a.matrix, &ones).iter().zip(apply_mat(&b.matrix, &ones)).map(|(x, y)| x - y).collect();
            l.ops.boundary_norm(&d) / l.ops.boundary_norm(&apply_mat(&b.matrix, &ones))
        })
        .collect();
    assert!(gaps[1] < 0.7 * gaps[0], "{gaps:?}");
}

#[test]
fn nonpositive_conductivity_is_rejected() {
    let l = common::lab(0);
    let sigma = vec![-1.0; l.ops.n()];
    let flux = vec![0.0; l.ops.n_boundary()];
    assert!(matches!(
        conductivity_route(&l.mesh, &l.ops, &sigma, &flux),
        Err(ReconError::NonPositiveConductivity(_)) | Err(ReconError::NearSingular { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn entry_access_succeeds_exactly_inside_the_masks(i in 0usize..56, j in 0usize..56) {
        let l = common::lab(0);
        let v = view(&l);
        let (i, j) = (i % v.size(), j % v.size());
        let inside = v.output_mask[i] && v.input_mask[j];
        prop_assert_eq!(v.entry(i, j).is_ok(), inside);
        prop_assert_eq!(v.violations(), usize::from(!inside));
    }
}
