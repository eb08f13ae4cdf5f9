mod common;

use std::f64::consts::PI;

use recon::discretization::*;
use recon::linalg::{c64, ZERO};
use recon::ReconError;

fn nodal(lab: &recon::pipeline::Lab, f: impl Fn([f64; 3]) -> f64) -> Vec<c64> {
    lab.mesh.vertices.iter().map(|&p| c64::new(f(p), 0.0)).collect()
}

#[test]
fn stiffness_is_symmetric_and_kills_constants() {
    let l = common::lab(1);
    let k = &l.ops.stiffness;
    let t = k.transpose();
    for i in 0..k.nrows {
        let row: f64 = k.row(i).map(|(_, v)| v).sum();
        assert!(row.abs() < 1e-12);
        for ((j, a), (jj, b)) in k.row(i).zip(t.row(i)) {
            assert_eq!(j, jj);
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn lumped_masses_sum_to_volume_and_area() {
    let l = common::lab(2);
    let vol: f64 = l.ops.mass.iter().sum();
    assert!((vol - l.mesh.volume()).abs() < 1e-12);
    let area: f64 = l.ops.boundary_mass.iter().sum();
    assert!((area - 4.0 * PI).abs() / (4.0 * PI) < 0.02);
}

#[test]
fn linear_fields_are_discretely_harmonic() {
    let l = common::lab(1);
    let u = nodal(&l, |p| 2.0 * p[0] - p[1] + 0.5 * p[2] + 1.0);
    let ku = l.ops.stiffness.apply(&u);
    for &v in &l.ops.interior {
        assert!(ku[v].norm() < 1e-12);
    }
    let back = dirichlet_solve(&l.ops, &Potential::zero(l.ops.n()), &vec![ZERO; l.ops.n()], &l.ops.trace(&u)).unwrap();
    assert!(common::rel(&back, &u) < 1e-12);
}

#[test]
fn harmonic_dirichlet_problem_converges() {
    let f = |p: [f64; 3]| p[0].exp() * p[1].cos();
    let errs: Vec<f64> = (0..=2)
        .map(|level| {
            let l = common::lab(level);
            let exact = nodal(&l, f);
            let u = poisson_project(&l.ops, &Potential::zero(l.ops.n()), &l.ops.trace(&exact)).unwrap();
            let d: Vec<c64> = u.iter().zip(&exact).map(|(a, b)| a - b).collect();
            l.ops.mass_norm(&d)
        })
        .collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    assert!(errs[2] / errs[1] < 0.4, "{errs:?}");
}

#[test]
fn normal_derivative_of_a_linear_field_is_its_normal_component() {
    let l = common::lab(2);
    let u = nodal(&l, |p| p[0]);
    let zero = vec![ZERO; l.ops.n()];
    let dn = normal_derivative(&l.ops, &u, &zero, &zero);
    // Weak normal derivative agrees with ν₁ in the boundary-mass norm.
    let exact: Vec<c64> = l.ops.boundary.iter().map(|&v| c64::new(l.mesh.vertex_normal(v)[0], 0.0)).collect();
    let d: Vec<c64> = dn.iter().zip(&exact).map(|(a, b)| a - b).collect();
    assert!(l.ops.boundary_norm(&d) / l.ops.boundary_norm(&exact) < 0.1);
}

#[test]
fn schrodinger_solve_matches_a_manufactured_solution() {
    // u = exp(x1), q = 1: −Δu + u = 0.
    let errs: Vec<f64> = (0..=2)
        .map(|level| {
            let l = common::lab(level);
            let exact = nodal(&l, |p| p[0].exp());
            let q = Potential::from_values(vec![c64::new(1.0, 0.0); l.ops.n()]);
            let u = poisson_project(&l.ops, &q, &l.ops.trace(&exact)).unwrap();
            let d: Vec<c64> = u.iter().zip(&exact).map(|(a, b)| a - b).collect();
            l.ops.mass_norm(&d)
        })
        .collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
}

#[test]
fn h1_interpolation_error_is_first_order() {
    let u = |p: [f64; 3]| p[0].exp() * p[1].cos();
    let g = |p: [f64; 3]| [p[0].exp() * p[1].cos(), -p[0].exp() * p[1].sin(), 0.0];
    let e: Vec<(f64, f64)> = (0..=2)
        .map(|level| {
            let l = common::lab(level);
            (l.mesh.max_edge(), h1_interpolation_error(&l.mesh, u, g))
        })
        .collect();
    let slope = recon::linalg::log_log_slope(&[e[1].0, e[2].0], &[e[1].1, e[2].1]).unwrap();
    assert!(slope > 0.8 && slope < 1.3, "{e:?} slope {slope}");
}

#[test]
fn recovered_gradients_approach_the_exact_ones() {
    let errs: Vec<f64> = (1..=2)
        .map(|level| {
            let l = common::lab(level);
            let u = nodal(&l, |p| (p[0] * p[1]).sin());
            let d1 = l.ops.dx1.apply(&u);
            let exact = nodal(&l, |p| p[1] * (p[0] * p[1]).cos());
            common::rel(&d1, &exact)
        })
        .collect();
    assert!(errs[1] < errs[0], "{errs:?}");
}

#[test]
fn potential_descriptors_evaluate_as_documented() {
    let l = common::lab(0);
    let base = std::path::Path::new(".");
    let g = Potential::from_descriptor(&PotentialDescriptor::default(), &l.mesh, base).unwrap();
    for (v, p) in l.mesh.vertices.iter().enumerate() {
        let d2 = p[0] * p[0] + (p[1] - 3.0).powi(2) + p[2] * p[2];
        assert!((g.values[v].re - 2.0 * (-d2 / 0.18).exp()).abs() < 1e-14);
    }
    let ball = PotentialDescriptor::Ball { amplitude: [1.0, 0.5], center: [0.0, 3.0, 0.0], radius: 0.5 };
    let b = Potential::from_descriptor(&ball, &l.mesh, base).unwrap();
    assert!(!b.is_real() && b.values.iter().any(|v| *v == ZERO));
    let bad = PotentialDescriptor::Gaussian { amplitude: [1.0, 0.0], center: [0.0; 3], width: 0.0 };
    assert!(matches!(Potential::from_descriptor(&bad, &l.mesh, base), Err(ReconError::Invalid(_))));
}

#[test]
fn descriptor_json_defaults_and_tags() {
    let d: PotentialDescriptor = serde_json::from_str(r#"{"kind":"constant","value":[0.5,0.0]}"#).unwrap();
    assert_eq!(d, PotentialDescriptor::Constant { value: [0.5, 0.0] });
    let s = serde_json::to_string(&PotentialDescriptor::default()).unwrap();
    assert!(s.contains("\"kind\":\"gaussian\""));
}

#[test]
fn nodal_csv_round_trip() {
    let l = common::lab(0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.csv");
    let mut body = String::from("vertex,re,im\n");
    for v in 0..l.ops.n() {
        body.push_str(&format!("{v},{},{}\n", v as f64 * 0.01, -(v as f64)));
    }
    std::fs::write(&path, body).unwrap();
    let desc = PotentialDescriptor::Nodal { file: "q.csv".into() };
    let q = Potential::from_descriptor(&desc, &l.mesh, dir.path()).unwrap();
    assert_eq!(q.values[7], c64::new(0.07, -7.0));
    std::fs::write(&path, "99999,1,0\n").unwrap();
    assert!(Potential::from_descriptor(&desc, &l.mesh, dir.path()).is_err());
}

#[test]
fn dirichlet_eigenvalue_is_near_singular() {
    // Shift by the smallest discrete Dirichlet eigenvalue, found by inverse iteration.
    let l = common::lab(0);
    let zero = Potential::zero(l.ops.n());
    let s = DirichletSolver::new(&l.ops, &zero).unwrap();
    let mut u: Vec<c64> = l.ops.interior.iter().map(|_| c64::new(1.0, 0.0)).collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mut rhs = vec![ZERO; l.ops.n()];
        for (p, &v) in l.ops.interior.iter().enumerate() {
            rhs[v] = u[p];
        }
        let w = s.solve(&rhs, &vec![ZERO; l.ops.n_boundary()]);
        let wi: Vec<c64> = l.ops.interior.iter().map(|&v| w[v]).collect();
        let num: f64 = wi.iter().zip(&u).zip(&l.ops.interior).map(|((a, b), &v)| (a * b.conj()).re * l.ops.mass[v]).sum();
        let den: f64 = wi.iter().zip(&l.ops.interior).map(|(a, &v)| a.norm_sqr() * l.ops.mass[v]).sum();
        lambda = num / den;
        let n = den.sqrt();
        u = wi.iter().map(|a| a / n).collect();
    }
    let shifted = Potential::from_values(vec![c64::new(-lambda, 0.0); l.ops.n()]);
    assert!(matches!(DirichletSolver::new(&l.ops, &shifted), Err(ReconError::NearSingular { .. })));
    assert!(s.condition.is_finite() && s.condition < 1e6);
}
