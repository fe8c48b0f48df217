mod common;

use common::{noisy_state, qubit_qutrit_scenario, random_ket, random_separable};
use hvlab_core::constructions::{
    build_flagged_werner, build_kcbs, flagged_kcbs_values, kcbs_closed, kcbs_correlators,
    kcbs_projectors, witness_w,
};
use hvlab_core::hvlp::{check_model, separable_reduction, ModelClass, DEFAULT_STRATEGY_CAP};
use hvlab_core::polytope::{cycle_facets, evaluate_facets, facet_min_oracle, CorrelationVector};
use hvlab_core::qmath::{hermitian_eigenvalues, ComplexMatrix, DensityOperator};
use hvlab_core::scenario::{decode, encode, EmpiricalModel, Selection};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_density(seed: u64, dims: Vec<usize>) -> DensityOperator {
    let mut r = rng(seed);
    let dim = dims.iter().product();
    let a = noisy_state(&mut r, dim, 1.0);
    let b = noisy_state(&mut r, dim, 1.0);
    let c = noisy_state(&mut r, dim, 0.3);
    let m = DensityOperator::mixture(&[(0.5, &a), (0.3, &b), (0.2, &c)]).unwrap();
    DensityOperator::new(m.matrix().clone(), dims).unwrap()
}

fn entangled_model(seed: u64) -> EmpiricalModel {
    let mut r = rng(seed);
    let qs = qubit_qutrit_scenario(&mut r);
    let rho = DensityOperator::from_ket(&random_ket(&mut r, 6), vec![2, 3]).unwrap();
    qs.born_table(&rho).unwrap()
}

fn lp_config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

proptest! {
    #[test]
    fn density_has_unit_trace_and_nonnegative_spectrum(seed in any::<u64>()) {
        let rho = random_density(seed, vec![2, 3]);
        let ev = hermitian_eigenvalues(rho.matrix()).unwrap();
        prop_assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
        prop_assert!(rho.matrix().trace().im.abs() < 1e-12);
        prop_assert!(ev[0] > -1e-12);
        prop_assert!((ev.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn partial_trace_inverts_kron(seed in any::<u64>()) {
        let a = random_density(seed, vec![2]);
        let b = random_density(seed.wrapping_add(1), vec![3]);
        let ab = a.kron(&b);
        prop_assert_eq!(ab.dims(), &[2, 3][..]);
        prop_assert!(ab.partial_trace(0).unwrap().matrix().max_abs_diff(a.matrix()) < 1e-12);
        prop_assert!(ab.partial_trace(1).unwrap().matrix().max_abs_diff(b.matrix()) < 1e-12);
    }

    #[test]
    fn partial_transpose_is_an_involution(seed in any::<u64>()) {
        // Shifted so the transposed operator is itself a valid state.
        let rho = random_density(seed, vec![3, 3]);
        let id = ComplexMatrix::identity(9);
        let sigma = (&rho.partial_transpose(1).unwrap() + &id).scale_real(0.1);
        let sigma = DensityOperator::new(sigma, vec![3, 3]).unwrap();
        let back = sigma.partial_transpose(1).unwrap();
        let want = (rho.matrix() + &id).scale_real(0.1);
        prop_assert!(back.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn born_tables_are_nondisturbing(seed in any::<u64>()) {
        let mut r = rng(seed);
        let qs = qubit_qutrit_scenario(&mut r);
        let rho = random_density(seed ^ 0x55, vec![2, 3]);
        let model = qs.born_table(&rho).unwrap();
        prop_assert!(model.check_no_disturbance().max_discrepancy <= 1e-10);
        for t in model.tables() {
            prop_assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn postselected_branches_sum_to_one(seed in any::<u64>(), outcome_of in 0usize..2) {
        let mut r = rng(seed);
        let qs = qubit_qutrit_scenario(&mut r);
        let rho = random_density(seed ^ 0x77, vec![2, 3]);
        let id = if outcome_of == 0 { "A1" } else { "A2" };
        let total: f64 = (0..2)
            .map(|o| qs.postselect_state(&rho, id, o).map(|(p, _)| p).unwrap_or(0.0))
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let model = qs.born_table(&rho).unwrap();
        let (p, _) = model.postselect(id, 0).unwrap();
        let (q, _) = qs.postselect_state(&rho, id, 0).unwrap();
        prop_assert!((p - q).abs() < 1e-10);
    }

    #[test]
    fn marginalization_commutes_with_born_rule(seed in any::<u64>(), mask in 1u8..4, bmask in 1u8..32) {
        let mut r = rng(seed);
        let qs = qubit_qutrit_scenario(&mut r);
        let rho = random_density(seed ^ 0x99, vec![2, 3]);
        let mut ids: Vec<String> = ["A1", "A2"]
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, s)| s.to_string())
            .collect();
        ids.extend((0..5).filter(|j| bmask >> j & 1 == 1).map(|j| format!("B{j}")));
        let coarse = qs.born_table(&rho).unwrap().marginalize(&Selection::Measurements(ids.clone()));
        let direct = qs.restrict(&ids).and_then(|q| q.born_table(&rho));
        match (coarse, direct) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.scenario(), b.scenario());
                for (x, y) in a.tables().iter().zip(b.tables()) {
                    for (u, v) in x.iter().zip(y) {
                        prop_assert!((u - v).abs() < 1e-12);
                    }
                }
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "paths disagree: {:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn kcbs_correlators_follow_from_projectors(seed in any::<u64>()) {
        let rho = random_density(seed, vec![3]);
        let p = kcbs_projectors();
        let x = kcbs_correlators(&rho);
        for j in 0..5 {
            let want = 1.0 - 2.0 * rho.expectation(&p[j]) - 2.0 * rho.expectation(&p[(j + 1) % 5]);
            prop_assert!((x[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_radix_round_trips(radices in prop::collection::vec(1usize..6, 1..6), seed in any::<u64>()) {
        let total: usize = radices.iter().product();
        let index = (seed as usize) % total;
        let digits = decode(index, &radices);
        prop_assert!(digits.iter().zip(&radices).all(|(d, r)| d < r));
        prop_assert_eq!(encode(&digits, &radices), index);
    }

    #[test]
    fn facet_values_are_linear(
        x in prop::collection::vec(-1.0f64..1.0, 5),
        y in prop::collection::vec(-1.0f64..1.0, 5),
        s in -2.0f64..2.0,
    ) {
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + s * b).collect();
        for f in cycle_facets(5).unwrap() {
            prop_assert!((f.value(&sum) - f.value(&x) - s * f.value(&y)).abs() < 1e-12);
        }
    }

    #[test]
    fn kcbs_block_matches_closed_forms(a in 1e-6f64..=1.0) {
        let c = build_kcbs(a.sqrt()).unwrap();
        let rho_b = c.bob_marginal();
        let v = hvlab_core::constructions::kcbs_values(&c);
        prop_assert!((v.d_cond.unwrap() - kcbs_closed::d_cond()).abs() < 1e-10);
        prop_assert!((witness_w(&c) - kcbs_closed::witness(a)).abs() < 1e-10);
        prop_assert!((rho_b.expectation(&c.d) - kcbs_closed::d_uncond(a)).abs() < 1e-10);
        let x = kcbs_correlators(&rho_b);
        for (got, want) in x.iter().zip(kcbs_closed::correlators(a)) {
            prop_assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn flagged_unconditional_facets_hold_below_threshold(eps in 0.0f64..=0.58, w in 0.0f64..=1.0) {
        let c = build_flagged_werner(eps, w).unwrap();
        let v = flagged_kcbs_values(&c).unwrap();
        let scan = evaluate_facets(&CorrelationVector::new(v.x_uncond.to_vec()).unwrap(), &cycle_facets(5).unwrap()).unwrap();
        for e in &scan.entries {
            prop_assert!(e.value >= -3.0 - 1e-10, "facet {:?} at {}", e.gammas, e.value);
        }
    }

    #[test]
    fn flagged_conditional_symmetric_facet_tracks_d_cond(eps in 0.0f64..=1.0, w in 0.0f64..=1.0) {
        let c = build_flagged_werner(eps, w).unwrap();
        let v = flagged_kcbs_values(&c).unwrap();
        prop_assume!((v.d_cond + 3.0).abs() > 1e-9);
        let scan = evaluate_facets(&CorrelationVector::new(v.x_cond.to_vec()).unwrap(), &cycle_facets(5).unwrap()).unwrap();
        let sym = scan.entries.iter().find(|e| e.gammas.iter().all(|&g| g == 1)).unwrap();
        prop_assert_eq!(sym.violated, v.d_cond < -3.0);
    }
}

proptest! {
    #![proptest_config(lp_config())]

    #[test]
    fn certificates_check_out_independently(seed in any::<u64>()) {
        let model = entangled_model(seed);
        for class in [ModelClass::Gnchv, ModelClass::Glhv, ModelClass::NchvLocal(1)] {
            let (problem, cert) = check_model(&model, class, true, DEFAULT_STRATEGY_CAP).unwrap();
            prop_assert_eq!(&cert.problem_hash, &problem.content_hash());
            if cert.is_feasible() {
                let w = cert.dense_weights(problem.cols()).unwrap();
                prop_assert!(w.iter().all(|&v| v >= -1e-12));
                let r = problem
                    .apply(&w)
                    .iter()
                    .zip(problem.rhs())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                prop_assert!(r <= 1e-9);
            } else {
                let y = cert.dual.as_ref().unwrap();
                prop_assert!((y.iter().fold(0.0f64, |m, v| m.max(v.abs())) - 1.0).abs() < 1e-12);
                let slack = problem.apply_transpose(y).into_iter().fold(f64::MIN, f64::max);
                let margin: f64 = y.iter().zip(problem.rhs()).map(|(a, b)| a * b).sum();
                prop_assert!(slack <= 1e-10);
                prop_assert!(margin >= 1e-7);
            }
        }
    }

    #[test]
    fn solving_is_deterministic(seed in any::<u64>()) {
        let model = entangled_model(seed);
        let (_, a) = check_model(&model, ModelClass::Gnchv, true, DEFAULT_STRATEGY_CAP).unwrap();
        let reparsed = EmpiricalModel::from_json_str(&model.to_json_string()).unwrap();
        let (_, b) = check_model(&reparsed, ModelClass::Gnchv, true, DEFAULT_STRATEGY_CAP).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn separable_models_sit_in_every_class(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (qs, comps) = random_separable(&mut r);
        let rho = hvlab_core::hvlp::separable_state(&comps).unwrap();
        let model = qs.born_table(&rho).unwrap();
        let nchv = separable_reduction(&qs, &comps, 1e-9).unwrap();
        prop_assert!(nchv.max_deviation(&model) < 1e-9);
        for class in [ModelClass::Gnchv, ModelClass::Glhv, ModelClass::NchvLocal(0), ModelClass::NchvLocal(1)] {
            let (_, cert) = check_model(&model, class, true, DEFAULT_STRATEGY_CAP).unwrap();
            prop_assert!(cert.is_feasible(), "{} infeasible", class);
        }
    }

    #[test]
    fn hierarchy_is_monotone(seed in any::<u64>()) {
        let model = entangled_model(seed);
        let run = |c| check_model(&model, c, true, DEFAULT_STRATEGY_CAP).unwrap().1.is_feasible();
        if run(ModelClass::Gnchv) {
            prop_assert!(run(ModelClass::Glhv));
            prop_assert!(run(ModelClass::NchvLocal(0)) && run(ModelClass::NchvLocal(1)));
        }
    }

    #[test]
    fn single_contexts_are_always_classical(seed in any::<u64>()) {
        let model = entangled_model(seed);
        prop_assert!(model.check_no_disturbance().max_discrepancy <= 1e-10);
        for k in 0..model.scenario().num_contexts() {
            let one = model.restrict_to_context(k).unwrap();
            let (_, cert) = check_model(&one, ModelClass::Gnchv, true, DEFAULT_STRATEGY_CAP).unwrap();
            prop_assert!(cert.is_feasible());
        }
    }
}

#[test]
fn facet_bounds_match_brute_force() {
    for n in [3, 5, 7] {
        let facets = cycle_facets(n).unwrap();
        assert_eq!(facets.len(), 1 << (n - 1));
        for f in &facets {
            assert_eq!(facet_min_oracle(f), f.bound, "n = {n}, {:?}", f.gammas);
        }
    }
}
