//! Exact values every oracle must reproduce.

use std::f64::consts::{E, LN_2, PI};

use spinesim_core::model::{presets, BranchingParams, Field, FiniteChainMotion, Model, OffspringLaw};
use spinesim_core::spectral::{
    expm, integrated_semigroup, iu_convergence_profile, llogl_criterion, many_to_one_chain,
    many_to_one_diffusion, principal_eigentriple, solve_u_equation_checked, spectral_gap, tilted_generator,
    validate_eigentriple, Criterion,
};
use spinesim_core::{Error, ModelSpec};

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() < tol, "{a} vs {b}");
}

#[test]
fn symmetric_chain_triple() {
    let spec = presets::sym();
    let eig = principal_eigentriple(&spec).unwrap();
    close(eig.lambda1, 1.0, 1e-10);
    for x in 0..2 {
        close(eig.phi_at(x), 1.0, 1e-10);
        close(eig.phi_tilde_at(x), 0.5, 1e-10);
    }
    assert!(validate_eigentriple(&spec, &eig).passed());
    close(llogl_criterion(&spec, &eig).value().unwrap(), 2.0 * LN_2, 1e-12);
}

#[test]
fn asymmetric_chain_triple() {
    let spec = presets::asym();
    let m = spec.as_chain().unwrap();
    let eig = principal_eigentriple(&spec).unwrap();
    close(eig.lambda1, 2.0, 1e-10);
    close(eig.phi_at(0), 0.5, 1e-10);
    close(eig.phi_at(1), 1.0, 1e-10);
    close(eig.phi_tilde_at(0), 2.0 / 3.0, 1e-10);
    close(eig.phi_tilde_at(1), 2.0 / 3.0, 1e-10);
    close(eig.phi_sq_m, 1.25, 1e-10);
    close(spectral_gap(m), 3.0, 1e-10);
    let g = tilted_generator(m, &eig).unwrap();
    let expected = [[-2.0, 2.0], [1.0, -1.0]];
    for x in 0..2 {
        for y in 0..2 {
            close(g[(x, y)], expected[x][y], 1e-10);
        }
    }
    let want = (2.0 / 3.0) * (2.0 * LN_2 + 3.0 * 3f64.ln());
    close(llogl_criterion(&spec, &eig).value().unwrap(), want, 1e-10);
    let profile = iu_convergence_profile(m, &eig, &[0.5, 1.0, 2.0]).unwrap();
    for (t, d) in profile.t.iter().zip(&profile.deviation) {
        close(*d, 2.0 * (-3.0 * t).exp(), 1e-10);
    }
    assert!(profile.strictly_decreasing);
    close(profile.slope, -3.0, 1e-8);
}

#[test]
fn brownian_triple_and_expectation() {
    let spec = presets::bm();
    let m = spec.as_diffusion().unwrap();
    let eig = principal_eigentriple(&spec).unwrap();
    assert_eq!(eig.lambda1, 0.5);
    close(eig.phi_at(PI / 2.0), 1.0, 1e-15);
    let x = 1.0;
    let v = many_to_one_diffusion(m, |y| y.sin(), x, 1.0).unwrap();
    close(v, 0.5f64.exp() * x.sin(), 1e-8);
    assert!(llogl_criterion(&spec, &eig).is_finite());
}

#[test]
fn killed_symmetric_chain_is_subcritical() {
    let q = vec![vec![-1.0, 1.0], vec![1.0, -1.0]];
    let motion = FiniteChainMotion::new(vec!["0".into(), "1".into()], q, vec![2.0, 2.0], vec![1.0, 1.0]).unwrap();
    let b = BranchingParams::homogeneous(2, 1.0, OffspringLaw::degenerate(2)).unwrap();
    let spec = ModelSpec::Chain(Model::new("killed", motion, b));
    match principal_eigentriple(&spec) {
        Err(Error::Supercriticality { lambda1 }) => close(lambda1, -1.0, 1e-10),
        other => panic!("{other:?}"),
    }
}

#[test]
fn heavy_tail_criterion_diverges() {
    let spec = presets::heavy();
    let eig = principal_eigentriple(&spec).unwrap();
    close(eig.lambda1, 2.046_094_555_572_218_7, 1e-10);
    assert!(matches!(llogl_criterion(&spec, &eig), Criterion::Diverges { .. }));
}

#[test]
fn many_to_one_values() {
    let sym = presets::sym();
    let sm = sym.as_chain().unwrap();
    close(many_to_one_chain(sm, &[1.0, 1.0], 0, 1.0), E, 1e-12);
    close(many_to_one_chain(sm, &[1.0, 0.0], 0, 1.0), E * (1.0 + (-2f64).exp()) / 2.0, 1e-12);
    let asym = presets::asym();
    let am = asym.as_chain().unwrap();
    close(many_to_one_chain(am, &[1.0, 1.0], 0, 1.0), 5.048_663_879_677_582, 1e-10);
    close(many_to_one_chain(am, &[0.0, 1.0], 0, 1.0), 2.340_392_219_253_07, 1e-10);
    close(many_to_one_chain(am, &[0.5, 1.0], 0, 1.0), 0.5 * E * E, 1e-10);
}

#[test]
fn spine_oracles() {
    let sym = presets::sym();
    let sm = sym.as_chain().unwrap();
    let eig = principal_eigentriple(&sym).unwrap();
    let g = tilted_generator(sm, &eig).unwrap();
    let p = expm(&g);
    close(p[(0, 0)], (1.0 + (-2f64).exp()) / 2.0, 1e-12);
    close(integrated_semigroup(&g, sm.branching.a_beta(), 0, 1.5), 3.0, 1e-12);

    let asym = presets::asym();
    let am = asym.as_chain().unwrap();
    let eig = principal_eigentriple(&asym).unwrap();
    let g = tilted_generator(am, &eig).unwrap();
    close(expm(&g)[(0, 0)], 0.366_524_71, 1e-8);
    close(integrated_semigroup(&g, am.branching.a_beta(), 0, 1.0), 3.366_524_712_245_241_5, 1e-10);
}

#[test]
fn laplace_values() {
    let sym = presets::sym();
    let sol = solve_u_equation_checked(sym.as_chain().unwrap(), &[0.5, 0.5], 1.0, 1e-3).unwrap();
    let u0 = (-0.5f64).exp();
    close(sol.u[0], u0 / (u0 + (1.0 - u0) * E), 1e-10);
    assert!(sol.halving_difference < 1e-8);

    let asym = presets::asym();
    let sol = solve_u_equation_checked(asym.as_chain().unwrap(), &[0.3, 0.7], 1.0, 1e-3).unwrap();
    close(sol.u[0], 0.350_489_195_169_852_2, 1e-10);
    close(sol.u[1], 0.254_672_864_525_217_26, 1e-10);
    assert!(sol.halving_difference < 1e-8);
}

#[test]
fn sabotaged_triple_is_rejected() {
    let spec = presets::sym();
    let eig = principal_eigentriple(&spec).unwrap().with_phi_tilde_scaled(2.0);
    let d = validate_eigentriple(&spec, &eig);
    assert!(!d.passed());
    close(d.normalization_error, 1.0, 1e-12);
    assert!(matches!(eig.phi_tilde, Field::Table(_)));
}
