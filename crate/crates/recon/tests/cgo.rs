mod common;

use proptest::prelude::*;
use recon::cgo::*;
use recon::ReconError;

#[test]
fn incident_fields_solve_the_conjugated_equation() {
    let l = common::lab(1);
    for tau in [4.0, 12.0] {
        let rp = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, tau).unwrap();
        let mu = build_mu(&rp, &l.ops, &l.frame, &l.cutoffs, &AngularMode::cos(1)).unwrap();
        let r = rp.solver.op.apply_interior(&l.ops, &mu.field);
        let scale = l.ops.mass_norm(&mu.field);
        assert!(l.ops.mass_norm(&r) < 1e-9 * scale);
        // The unweighted harmonic is discretely harmonic.
        let lap = l.ops.laplacian(&mu.harmonic);
        let hs = l.ops.mass_norm(&mu.harmonic);
        assert!(l.ops.interior.iter().all(|&v| lap[v].norm() < 1e-7 * hs));
    }
}

#[test]
fn traces_stay_inside_their_masks() {
    let l = common::lab(1);
    let rp = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, 8.0).unwrap();
    let rm = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, -8.0).unwrap();
    let mu = build_mu(&rp, &l.ops, &l.frame, &l.cutoffs, &AngularMode::one()).unwrap();
    let nu = build_nu(&rm, &l.ops, &l.frame, &l.cutoffs).unwrap();
    assert_eq!(mu.leak(&l.ops, &l.partition), 0.0);
    assert_eq!(nu.leak(&l.ops, &l.partition), 0.0);
    assert_eq!(mu.support, SupportTag::BTilde);
    assert_eq!(nu.support, SupportTag::FTilde);
}

#[test]
fn wrong_sign_solvers_are_rejected() {
    let l = common::lab(0);
    let rp = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, 4.0).unwrap();
    let rm = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, -4.0).unwrap();
    assert!(matches!(build_nu(&rp, &l.ops, &l.frame, &l.cutoffs), Err(ReconError::Invalid(_))));
    assert!(matches!(build_mu(&rm, &l.ops, &l.frame, &l.cutoffs, &AngularMode::one()), Err(ReconError::Invalid(_))));
}

#[test]
fn correction_shrinks_as_tau_grows() {
    let l = common::lab(1);
    let e: Vec<f64> = [4.0, 16.0]
        .iter()
        .map(|&t| {
            let rp = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, t).unwrap();
            build_mu(&rp, &l.ops, &l.frame, &l.cutoffs, &AngularMode::one()).unwrap().asymptotic_error
        })
        .collect();
    assert!(e[1] < e[0], "{e:?}");
}

#[test]
fn profile_annihilation_improves_under_refinement() {
    let r: Vec<f64> = (0..=2)
        .map(|level| {
            let l = common::lab(level);
            let p = incident_profile(&l.ops, &l.frame, &AngularMode::cos(2), recon::geometry::Side::Plus);
            annihilation_residual(&l.ops, &l.frame, &p.h) / l.ops.mass_norm(&p.h)
        })
        .collect();
    assert!(r[2] < r[1] && r[1] < r[0], "{r:?}");
}

#[test]
fn profile_matches_its_closed_form() {
    // n = 3: h = (z − z̄)^{−1/2} g(θ) = (2i r)^{−1/2} g(θ).
    let l = common::lab(0);
    let p = incident_profile(&l.ops, &l.frame, &AngularMode::sin(1), recon::geometry::Side::Plus);
    for v in 0..l.ops.n() {
        let r = l.frame.r[v];
        let want = recon::linalg::c64::new(0.0, 2.0 * r).powf(-0.5) * l.frame.theta[v].sin();
        assert!((p.h[v] - want).norm() < 1e-12);
    }
}

#[test]
fn mode_labels_reject_garbage() {
    for bad in ["", "cos0", "tan1", "sinx", "2"] {
        assert!(bad.parse::<AngularMode>().is_err(), "{bad}");
    }
    assert_eq!("const".parse::<AngularMode>().unwrap(), AngularMode::one());
    assert_eq!("cos".parse::<AngularMode>().unwrap(), AngularMode::cos(1));
    let json = serde_json::to_string(&AngularMode::sin(3)).unwrap();
    assert_eq!(json, "\"sin3\"");
}

proptest! {
    #[test]
    fn mode_labels_round_trip(k in 1usize..12, kind in 0u8..3, theta in -3.2f64..3.2) {
        let m = match kind { 0 => AngularMode::one(), 1 => AngularMode::cos(k), _ => AngularMode::sin(k) };
        let back: AngularMode = m.to_string().parse().unwrap();
        prop_assert_eq!(&back, &m);
        let want = match kind { 0 => 1.0, 1 => (k as f64 * theta).cos(), _ => (k as f64 * theta).sin() };
        prop_assert!((m.eval(theta) - want).abs() < 1e-12);
    }

    #[test]
    fn mode_arithmetic_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, theta in -3.2f64..3.2) {
        let m = AngularMode::cos(2).scaled(a).plus(&AngularMode::sin(1).scaled(b));
        let want = a * (2.0 * theta).cos() + b * theta.sin();
        prop_assert!((m.eval(theta) - want).abs() < 1e-12);
        prop_assert_eq!(AngularMode::sin(2).is_odd(), true);
        prop_assert_eq!(m.max_order(), 2);
    }
}
