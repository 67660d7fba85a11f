use proptest::prelude::*;
use spinesim_core::genealogy::{
    compute_m, dump_tree, project_eta, select_uniform_spine, simulate_spine_qtilde, simulate_tree_p,
    UlamHarrisLabel,
};
use spinesim_core::model::{BranchingParams, FiniteChainMotion, Model, OffspringLaw};
use spinesim_core::rng::{salt, Streams};
use spinesim_core::spectral::{
    expm, fk_semigroup_chain, llogl_criterion, principal_eigentriple_unchecked, solve_u_equation,
    tilted_generator, validate_eigentriple, Tiltable,
};
use spinesim_core::{Eigentriple, ModelSpec};

fn law_strategy() -> impl Strategy<Value = OffspringLaw> {
    prop::collection::vec(0.05f64..1.0, 3).prop_map(|w| {
        let total: f64 = w.iter().sum();
        OffspringLaw::finite(w.iter().enumerate().map(|(i, x)| (i + 2, x / total)))
    })
}

prop_compose! {
    fn chain_model()(n in 2usize..=4)(
        rates in prop::collection::vec(0.1f64..3.0, n * n),
        killing in prop::collection::vec(0.0f64..1.0, n),
        measure in prop::collection::vec(0.5f64..2.0, n),
        beta in prop::collection::vec(0.2f64..2.0, n),
        laws in prop::collection::vec(law_strategy(), n),
        n in Just(n),
    ) -> Model<FiniteChainMotion> {
        let mut gen = vec![vec![0.0; n]; n];
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    gen[x][y] = rates[x * n + y];
                }
            }
            gen[x][x] = -gen[x].iter().sum::<f64>();
        }
        let states = (0..n).map(|i| i.to_string()).collect();
        let motion = FiniteChainMotion::new(states, gen, killing, measure).unwrap();
        Model::new("random", motion, BranchingParams::new(beta, laws).unwrap())
    }
}

fn triple(m: &Model<FiniteChainMotion>) -> (ModelSpec, Eigentriple) {
    let spec = ModelSpec::Chain(m.clone());
    let eig = principal_eigentriple_unchecked(&spec).unwrap();
    (spec, eig)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generating_function_is_convex(law in law_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assert!((law.psi(1.0).unwrap() - 1.0).abs() < 1e-12);
        prop_assert_eq!(law.psi(0.0).unwrap(), law.prob(0));
        let mid = law.psi(0.5 * (a + b)).unwrap();
        prop_assert!(mid <= 0.5 * (law.psi(a).unwrap() + law.psi(b).unwrap()) + 1e-12);
    }

    #[test]
    fn size_biased_law_is_normalized(law in law_strategy()) {
        let hat = law.size_biased().unwrap();
        let total: f64 = (0..10).map(|k| hat.prob(k)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for k in 0..10u64 {
            prop_assert!((hat.prob(k) - k as f64 * law.prob(k) / law.mean()).abs() < 1e-12);
        }
    }

    #[test]
    fn semigroup_property(m in chain_model(), s in 0.05f64..1.0, t in 0.05f64..1.0) {
        let lhs = fk_semigroup_chain(&m, s + t);
        let rhs = fk_semigroup_chain(&m, s) * fk_semigroup_chain(&m, t);
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            prop_assert!(rel_close(*a, *b, 1e-9), "{a} vs {b}");
        }
    }

    #[test]
    fn eigentriple_is_invariant(m in chain_model()) {
        let (spec, eig) = triple(&m);
        let diag = validate_eigentriple(&spec, &eig);
        prop_assert!(diag.passed(), "{diag:?}");
        let phi = eig.phi.table().unwrap();
        prop_assert!((phi.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tilted_chain_preserves_phi_phi_tilde_m(m in chain_model(), t in 0.1f64..3.0) {
        let (_, eig) = triple(&m);
        let g = tilted_generator(&m, &eig).unwrap();
        let n = g.nrows();
        for x in 0..n {
            let row: f64 = (0..n).map(|y| g[(x, y)]).sum();
            prop_assert!(row.abs() < 1e-10);
            for y in 0..n {
                prop_assert!(x == y || g[(x, y)] >= 0.0);
            }
        }
        let p = expm(&(&g * t));
        let meas = m.motion.measure();
        let pi: Vec<f64> = (0..n).map(|y| eig.phi_at(y) * eig.phi_tilde_at(y) * meas[y]).collect();
        for y in 0..n {
            let moved: f64 = (0..n).map(|x| pi[x] * p[(x, y)]).sum();
            prop_assert!((moved - pi[y]).abs() < 1e-9);
        }
    }

    #[test]
    fn tilt_ignores_scaling_of_phi(m in chain_model(), c in 0.01f64..100.0) {
        let (_, eig) = triple(&m);
        let scaled = Eigentriple {
            phi: spinesim_core::model::Field::Table(eig.phi.table().unwrap().iter().map(|p| p * c).collect()),
            ..eig.clone()
        };
        let a = tilted_generator(&m, &eig).unwrap();
        let b = tilted_generator(&m, &scaled).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!(rel_close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn criterion_is_finite_for_finite_laws(m in chain_model()) {
        let (spec, eig) = triple(&m);
        let c = llogl_criterion(&spec, &eig);
        prop_assert!(c.is_finite());
        prop_assert!(c.value().unwrap() >= 0.0);
    }

    #[test]
    fn laplace_solution_is_a_probability(m in chain_model(), f in prop::collection::vec(0.0f64..2.0, 4)) {
        let n = m.motion.len();
        let u = solve_u_equation(&m, &f[..n], 0.5, 1e-3).unwrap();
        prop_assert!(u.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        let one = solve_u_equation(&m, &vec![0.0; n], 0.5, 1e-3).unwrap();
        prop_assert!(one.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn label_parent_child_roundtrip(digits in prop::collection::vec(1u64..10, 0..8), i in 1u64..20) {
        let u = UlamHarrisLabel::from_digits(digits.clone());
        let c = u.child(i);
        prop_assert_eq!(c.parent(), Some(u.clone()));
        prop_assert_eq!(c.depth(), digits.len() + 1);
        prop_assert!(u.is_ancestor_of(&c));
        prop_assert!(!c.is_ancestor_of(&u));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trees_are_consistent_and_project_to_m(m in chain_model(), seed in any::<u64>()) {
        let (_, eig) = triple(&m);
        let key = Streams::new(seed).replica_key(0);
        let tree = simulate_tree_p(&m, 0, 0.5, key, 200_000);
        prop_assume!(!tree.overflowed);
        prop_assert_eq!(tree.check_consistency(), Ok(()));
        let mt = compute_m(&tree, &eig).m.unwrap();
        let pe = project_eta(&m, &tree, &eig).unwrap();
        prop_assert!(rel_close(pe, mt, 1e-10), "{pe} vs {mt}");
        let again = simulate_tree_p(&m, 0, 0.5, key, 200_000);
        prop_assert_eq!(dump_tree(&tree), dump_tree(&again));
        let mut rng = key.salted_rng(salt::SELECT);
        let spine = select_uniform_spine(&tree, &mut rng).unwrap();
        prop_assert!(spine.end() <= 0.5 + 1e-12);
    }

    #[test]
    fn qtilde_spine_never_dies(m in chain_model(), seed in any::<u64>()) {
        let (_, eig) = triple(&m);
        let tilted = FiniteChainMotion::tilt(&m, &eig).unwrap();
        let deco = simulate_spine_qtilde(&m, &tilted, 0, 1.0, Streams::new(seed).replica_key(3));
        prop_assert!(deco.terminal().is_some());
        prop_assert!((deco.end() - 1.0).abs() < 1e-12);
        prop_assert!(deco.fissions().all(|f| f.offspring >= 2));
    }
}
