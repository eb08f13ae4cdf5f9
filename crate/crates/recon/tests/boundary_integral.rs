mod common;

use recon::boundary_integral::*;
use recon::carleman::GreensBundle;
use recon::cgo::{build_mu, AngularMode, PrescribedSolver};
use recon::discretization::Potential;
use recon::dtn::{assemble_dtn, dtn_difference, mask_partial, DtnDifference};
use recon::linalg::{c64, random_complex, ONE, ZERO};
use recon::pipeline::Lab;
use recon::transform::{solve_omega, SolveMode};
use recon::ReconError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn difference(l: &Lab, q: &Potential) -> DtnDifference {
    dtn_difference(&assemble_dtn(&l.ops, q).unwrap(), &assemble_dtn(&l.ops, &Potential::zero(l.ops.n())).unwrap()).unwrap()
}

#[test]
fn single_layer_factors_the_data() {
    let l = common::lab(1);
    let q = common::gaussian(&l);
    let d = difference(&l, &q);
    for tau in [8.0, 16.0] {
        let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, tau).unwrap();
        let s = assemble_single_layer(&bundle, &l.ops, &l.partition, AdjointConvention::Weighted);
        assert!(factorization_check(&s, &d, &q, &l.ops, &bundle).unwrap() < 1e-10);
        // Dropping the mass weights in the adjoint breaks the identity.
        let bad = assemble_single_layer(&bundle, &l.ops, &l.partition, AdjointConvention::PlainTranspose);
        assert!(factorization_check(&bad, &d, &q, &l.ops, &bundle).unwrap() > 0.1);
    }
}

#[test]
fn single_layer_columns_match_the_adjoint_field() {
    let l = common::lab(0);
    let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, 6.0).unwrap();
    let s = assemble_single_layer(&bundle, &l.ops, &l.partition, AdjointConvention::Weighted);
    let nb = l.ops.n_boundary();
    let free = l.partition.free_side(bundle.dual.side);
    assert_eq!(s.active_columns.len(), free.iter().filter(|f| **f).count());
    for b in 0..nb {
        if !free[b] {
            assert!((0..nb).all(|i| s.matrix[(i, b)] == ZERO));
        }
    }
    // Column b is Z∂ tr G Tr*(Z∂⁻¹ e_b).
    let b = s.active_columns[s.active_columns.len() / 2];
    let z: Vec<c64> = l.ops.boundary.iter().map(|&v| bundle.forward.op.weight[v]).collect();
    let mut e = vec![ZERO; nb];
    e[b] = ONE / z[b];
    let col = l.ops.trace(&bundle.apply(&l.ops.trace_adjoint(&e)));
    for i in 0..nb {
        assert!((s.matrix[(i, b)] - z[i] * col[i]).norm() < 1e-12 * (1.0 + s.matrix[(i, b)].norm()));
    }
}

#[test]
fn trace_green_adjoint_is_the_adjoint_of_trace_green() {
    let l = common::lab(0);
    let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, 6.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = random_complex(&mut rng, l.ops.n());
    let h = random_complex(&mut rng, l.ops.n_boundary());
    // ⟨tr G f, h⟩_∂ = ⟨f, (tr G)* h⟩_M, with the dual bundle as G*.
    let lhs: c64 = l.ops.boundary_pairing(&l.ops.trace(&bundle.apply(&f)), &h.iter().map(|v| v.conj()).collect::<Vec<_>>());
    let adj = trace_green_adjoint(&bundle, &l.ops, &h);
    let rhs: c64 = (0..l.ops.n()).map(|v| f[v] * adj[v].conj() * l.ops.mass[v]).sum();
    assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
}

#[test]
fn bie_recovers_the_scattering_trace() {
    let l = common::lab(1);
    let q = common::gaussian(&l);
    let view = mask_partial(difference(&l, &q), &l.ops, &l.partition);
    let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, 12.0).unwrap();
    let single = assemble_single_layer(&bundle, &l.ops, &l.partition, AdjointConvention::Weighted);
    let rp = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, 12.0).unwrap();
    let mu = build_mu(&rp, &l.ops, &l.frame, &l.cutoffs, &AngularMode::cos(1)).unwrap();
    let sol = solve_bie(&single, &view, &mu.harmonic_trace(&l.ops)).unwrap();
    assert!(sol.residual < 1e-10 && sol.condition < 1e3 && sol.reads > 0);
    let om = solve_omega(&bundle, &l.ops, &q, &mu, SolveMode::Neumann).unwrap();
    let w = l.ops.trace(&om.w);
    assert!(common::rel(&sol.trace, &w) < 1e-8);
    assert_eq!(view.violations(), 0);
}

#[test]
fn zero_data_returns_the_incident_trace() {
    let l = common::lab(0);
    let q = Potential::zero(l.ops.n());
    let view = mask_partial(difference(&l, &q), &l.ops, &l.partition);
    let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, 6.0).unwrap();
    let single = assemble_single_layer(&bundle, &l.ops, &l.partition, AdjointConvention::Weighted);
    let u: Vec<c64> = view.input_mask.iter().enumerate().map(|(i, &m)| if m { c64::new(i as f64, -1.0) } else { ZERO }).collect();
    let sol = solve_bie(&single, &view, &u).unwrap();
    assert_eq!(sol.condition, 1.0);
    assert!(common::rel(&sol.trace, &u) < 1e-15);
}

#[test]
fn incident_trace_outside_the_input_mask_is_rejected() {
    let l = common::lab(0);
    let q = common::gaussian(&l);
    let view = mask_partial(difference(&l, &q), &l.ops, &l.partition);
    let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, 6.0).unwrap();
    let single = assemble_single_layer(&bundle, &l.ops, &l.partition, AdjointConvention::Weighted);
    let mut u = vec![ZERO; l.ops.n_boundary()];
    u[view.input_mask.iter().position(|m| !m).unwrap()] = ONE;
    assert!(matches!(solve_bie(&single, &view, &u), Err(ReconError::Invalid(_))));
    assert!(matches!(solve_bie(&single, &view, &u[1..]), Err(ReconError::Mismatch(_))));
}

#[test]
fn data_outside_the_masks_cannot_influence_the_solution() {
    let l = common::lab(1);
    let q = common::gaussian(&l);
    let d = difference(&l, &q);
    let mut tampered = d.clone();
    let nb = l.ops.n_boundary();
    for i in 0..nb {
        for j in 0..nb {
            if !(l.partition.f_tilde[i] && l.partition.b_tilde[j]) {
                tampered.matrix[(i, j)] += c64::new(1e3, -7.0);
            }
        }
    }
    let a = mask_partial(d, &l.ops, &l.partition);
    let b = mask_partial(tampered, &l.ops, &l.partition);
    let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, 8.0).unwrap();
    let single = assemble_single_layer(&bundle, &l.ops, &l.partition, AdjointConvention::Weighted);
    let rp = PrescribedSolver::new(&l.ops, &l.frame, &l.partition, 8.0).unwrap();
    let u = build_mu(&rp, &l.ops, &l.frame, &l.cutoffs, &AngularMode::one()).unwrap().harmonic_trace(&l.ops);
    let ha = solve_bie(&single, &a, &u).unwrap().trace;
    let hb = solve_bie(&single, &b, &u).unwrap().trace;
    assert!(common::rel(&hb, &ha) < 1e-12);
}

#[test]
fn boundary_and_interior_equations_are_equivalent() {
    let l = common::lab(1);
    let q = common::gaussian(&l);
    let d = difference(&l, &q);
    let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, 8.0).unwrap();
    let single = assemble_single_layer(&bundle, &l.ops, &l.partition, AdjointConvention::Weighted);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = random_complex(&mut rng, l.ops.n_boundary());
    let r = equivalence_check(&single, &d, &q, &l.ops, &bundle, &f).unwrap();
    assert!(r.boundary_to_interior < 1e-10, "{r:?}");
    assert!(r.interior_to_boundary < 1e-10, "{r:?}");
}

#[test]
fn isomorphism_bound_holds() {
    let l = common::lab(1);
    let bundle = GreensBundle::new(&l.ops, &l.frame, &l.partition, 8.0).unwrap();
    let zero = isomorphism_check(&bundle, &Potential::zero(l.ops.n()), &l.ops, 1).unwrap();
    assert_eq!(zero.smallest_singular_value, 1.0);
    let r = isomorphism_check(&bundle, &common::gaussian(&l), &l.ops, 1).unwrap();
    assert!(r.contraction < 1.0);
    assert!(r.smallest_singular_value >= r.neumann_bound - 1e-6, "{r:?}");
    let big = Potential::from_values(common::gaussian(&l).values.iter().map(|v| v * 1e4).collect());
    assert!(matches!(isomorphism_check(&bundle, &big, &l.ops, 1), Err(ReconError::NotContracting { .. })));
}
