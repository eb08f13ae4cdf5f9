mod common;

use recon::carleman::GreensBundle;
use recon::cgo::{build_mu, build_nu, AngularMode, PrescribedSolver};
use recon::discretization::Potential;
use recon::linalg::{c64, I, ONE, ZERO};
use recon::transform::*;
use recon::ReconError;

fn gaussian_q(p: [f64; 3]) -> f64 {
    let d2 = p[0] * p[0] + (p[1] - 3.0).powi(2) + p[2] * p[2];
    2.0 * (-d2 / 0.18).exp()
}

#[test]
fn neumann_and_direct_solves_agree() {
    let l = common::lab(1);
    let q = common::gaussian(&l);
    let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, 16.0).unwrap();
    let rp = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, 16.0).unwrap();
    let mu = build_mu(&rp, &l.ops, &l.frame, &l.cutoffs, &AngularMode::cos(1)).unwrap();
    let a = solve_omega(&bundle, &l.ops, &q, &mu, SolveMode::Neumann).unwrap();
    let b = solve_omega(&bundle, &l.ops, &q, &mu, SolveMode::Direct).unwrap();
    assert!(!a.direct && b.direct);
    assert!(a.iterations > 0 && a.contraction < 1.0);
    assert!(common::rel(&a.omega, &b.omega) < 1e-8);
    assert!(a.residual < 1e-12 && b.residual < 1e-10);
}

#[test]
fn scattering_solution_solves_the_schrodinger_equation() {
    // w = ζ^τ ω satisfies (−Δ_h + q) w = 0 at interior nodes.
    let l = common::lab(1);
    let q = common::gaussian(&l);
    let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, 8.0).unwrap();
    let rp = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, 8.0).unwrap();
    let mu = build_mu(&rp, &l.ops, &l.frame, &l.cutoffs, &AngularMode::one()).unwrap();
    let s = solve_omega(&bundle, &l.ops, &q, &mu, SolveMode::Neumann).unwrap();
    let lap = l.ops.laplacian(&s.w);
    let scale = l.ops.mass_norm(&s.w);
    for &v in &l.ops.interior {
        let r = -lap[v] + q.values[v] * s.w[v];
        assert!(r.norm() < 1e-8 * scale, "{}", r.norm());
    }
}

#[test]
fn zero_potential_gives_zero_transform() {
    let l = common::lab(0);
    let q = Potential::zero(l.ops.n());
    let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, 4.0).unwrap();
    let rp = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, 4.0).unwrap();
    let rm = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, -4.0).unwrap();
    let mu = build_mu(&rp, &l.ops, &l.frame, &l.cutoffs, &AngularMode::one()).unwrap();
    let nu = build_nu(&rm, &l.ops, &l.frame, &l.cutoffs).unwrap();
    let s = solve_omega(&bundle, &l.ops, &q, &mu, SolveMode::Neumann).unwrap();
    assert_eq!(s.omega, mu.field);
    assert_eq!(transform_volume(&l.ops, &nu, &q, &s), ZERO);
}

#[test]
fn transform_is_linear_in_the_angular_mode() {
    let l = common::lab(0);
    let q = common::gaussian(&l);
    let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, 8.0).unwrap();
    let rp = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, 8.0).unwrap();
    let rm = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, -8.0).unwrap();
    let nu = build_nu(&rm, &l.ops, &l.frame, &l.cutoffs).unwrap();
    let t = |m: &AngularMode| {
        let mu = build_mu(&rp, &l.ops, &l.frame, &l.cutoffs, m).unwrap();
        transform_volume(&l.ops, &nu, &q, &solve_omega(&bundle, &l.ops, &q, &mu, SolveMode::Neumann).unwrap())
    };
    let (a, b) = (AngularMode::one(), AngularMode::cos(2));
    let combo = a.scaled(2.0).plus(&b.scaled(-0.5));
    let lhs = t(&combo);
    let rhs = t(&a) * 2.0 - t(&b) * 0.5;
    assert!((lhs - rhs).norm() < 1e-10 * rhs.norm());
}

#[test]
fn limit_constant_is_a_power_of_two_i() {
    assert_eq!(limit_constant(2), ONE);
    assert!((limit_constant(3) - ONE / (I * 2.0)).norm() < 1e-15);
    assert!((limit_constant(5) * (I * 2.0).powi(3) - ONE).norm() < 1e-15);
}

#[test]
fn radon_limit_needs_two_samples_and_orders_by_tau() {
    let s = |tau: f64, est: f64| TransformSample {
        tau,
        mode: AngularMode::one(),
        t_volume: ONE,
        t_boundary: c64::new(est, 0.0),
        oracle: c64::new(1.0, 0.0),
        limit_constant: ONE,
    };
    assert!(matches!(radon_limit(&[s(4.0, 0.5)]), Err(ReconError::TooFewSamples { needed: 2, got: 1 })));
    let l = radon_limit(&[s(16.0, 0.9), s(4.0, 0.5), s(8.0, 0.8)]).unwrap();
    assert_eq!(l.errors.len(), 3);
    assert!(l.strictly_decreasing);
    assert!((l.estimate.re - 0.9).abs() < 1e-15);
    assert!((l.relative_error - 0.1).abs() < 1e-12);
    assert!(!radon_limit(&[s(4.0, 0.9), s(8.0, 0.5)]).unwrap().strictly_decreasing);
}

#[test]
fn lumped_reference_integral_converges_to_quadrature() {
    let cases: [(AngularMode, fn([f64; 3]) -> f64); 2] = [
        (AngularMode::one(), |p| 1.0 / p[1].hypot(p[2])),
        (AngularMode::cos(2), |p| {
            let r2 = p[1] * p[1] + p[2] * p[2];
            (p[1] * p[1] - p[2] * p[2]) / (r2 * r2.sqrt())
        }),
    ];
    for (mode, g) in cases {
        let exact = common::ball_quadrature([0.0, 3.0, 0.0], 1.0, 120, |p| gaussian_q(p) * g(p));
        let errs: Vec<f64> = (1..=2)
            .map(|level| {
                let l = common::lab(level);
                let q = common::gaussian(&l);
                let v = reference_integral(&l.ops, &l.frame, &q, &mode);
                assert!(v.im.abs() < 1e-15);
                (v.re - exact).abs() / exact.abs()
            })
            .collect();
        assert!(errs[1] < errs[0] && errs[1] < 0.05, "{mode}: {errs:?}");
    }
}
