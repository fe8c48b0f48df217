mod common;

use common::{qubit_qutrit_scenario, random_separable};
use hvlab_core::constructions::{
    aux_witness_closed_form, aux_witness_f, build_flagged_werner, build_kcbs, build_ppath,
    chsh_smax,
};
use hvlab_core::hvlp::{
    active_set_probe, check_model, glue_refinement, separable_reduction, BlockComponent,
    BlockModel, HvlpError, LocalNchvModel, ModelClass, SeparableComponent, DEFAULT_STRATEGY_CAP,
};
use hvlab_core::qmath::{DensityOperator, Ket};
use hvlab_core::report::{kcbs_report, ReportOptions, Status};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn feasible(model: &hvlab_core::scenario::EmpiricalModel, class: ModelClass) -> bool {
    check_model(model, class, true, DEFAULT_STRATEGY_CAP).unwrap().1.is_feasible()
}

#[test]
fn mismatched_refinement_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let qs = qubit_qutrit_scenario(&mut rng);
    let s = qs.scenario();
    // Bob's blocks perfectly correlate each adjacent pair; the refinement
    // answers +1 everywhere and cannot reproduce that.
    let glhv = BlockModel {
        components: vec![BlockComponent {
            weight: 1.0,
            blocks: vec![
                vec![vec![1.0, 0.0]; 2],
                vec![vec![0.5, 0.0, 0.0, 0.5]; 5],
            ],
        }],
    };
    let refinements = vec![vec![
        LocalNchvModel::deterministic(&s.parties[0], &[0, 0]),
        LocalNchvModel::deterministic(&s.parties[1], &[0; 5]),
    ]];
    let err = glue_refinement(s, &glhv, &refinements, 1e-10).unwrap_err();
    assert!(matches!(err, HvlpError::RefinementMismatch(_)), "{err}");
    let err = glue_refinement(s, &glhv, &[], 1e-10).unwrap_err();
    assert!(matches!(err, HvlpError::Mismatch(_)), "{err}");
}

#[test]
fn single_product_component_gives_product_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (qs, comps) = random_separable(&mut rng);
    let single = SeparableComponent {
        weight: 1.0,
        ..comps[0].clone()
    };
    let rho = single.product_state().unwrap();
    let model = qs.born_table(&rho).unwrap();
    let glued = separable_reduction(&qs, std::slice::from_ref(&single), 1e-10).unwrap();
    assert!(glued.max_deviation(&model) <= 1e-10);
    let s = qs.scenario();
    for (k, ctx) in s.tested.iter().enumerate() {
        let a = model.local_marginal(k, 0);
        let b = model.local_marginal(k, 1);
        let t = model.table(k);
        let nb = b.len();
        for (i, pa) in a.iter().enumerate() {
            for (j, pb) in b.iter().enumerate() {
                assert!((t[i * nb + j] - pa * pb).abs() < 1e-12, "context {ctx:?}");
            }
        }
    }
}

#[test]
fn two_component_mixtures_are_confirmed_by_the_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut checked = 0;
    while checked < 5 {
        let (qs, comps) = random_separable(&mut rng);
        if comps.len() != 2 {
            continue;
        }
        let rho = hvlab_core::hvlp::separable_state(&comps).unwrap();
        let model = qs.born_table(&rho).unwrap();
        let glued = separable_reduction(&qs, &comps, 1e-10).unwrap();
        assert!(glued.max_deviation(&model) <= 1e-10);
        assert!(feasible(&model, ModelClass::Gnchv));
        checked += 1;
    }
}

#[test]
fn invalid_mixture_weights_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (qs, mut comps) = random_separable(&mut rng);
    comps[0].weight += 0.5;
    assert!(matches!(
        separable_reduction(&qs, &comps, 1e-10),
        Err(HvlpError::InvalidWeights(_))
    ));
}

#[test]
fn deterministic_ppath_branch_glues_exactly() {
    let model = build_ppath(1.0, 0.0).unwrap().model().unwrap();
    assert!(feasible(&model, ModelClass::Gnchv));
    assert!(feasible(&model, ModelClass::Glhv));
}

#[test]
fn ppath_glhv_is_feasible_across_the_range() {
    for h0 in [0.0, 0.3, 0.5f64.sqrt(), 0.9, 1.0] {
        let model = build_ppath(h0, 0.0).unwrap().model().unwrap();
        assert!(feasible(&model, ModelClass::Glhv), "h0 = {h0}");
    }
    let model = build_ppath(0.5f64.sqrt(), 0.0).unwrap().model().unwrap();
    assert!(!feasible(&model, ModelClass::Gnchv));
}

#[test]
fn ppath_phase_keeps_zero_events() {
    let c = build_ppath(0.6, std::f64::consts::FRAC_PI_3).unwrap();
    for p in hvlab_core::constructions::hardy_zero_events(&c) {
        assert!(p <= 1e-18, "{p}");
    }
    let w = hvlab_core::constructions::hardy_witness(&c);
    assert!((w - 0.36 * 0.64).abs() < 1e-10);
}

#[test]
fn flag_branch_alone_is_local_but_bob_is_contextual() {
    // |00⟩ is a product state, but Bob's |0⟩ already violates the symmetric
    // KCBS facet, so only the classes that ignore his contexts succeed.
    let c = build_flagged_werner(1.0, 0.0).unwrap();
    let flag = DensityOperator::from_ket(&Ket::basis(9, 0), vec![3, 3]).unwrap();
    assert!(c.state.matrix().max_abs_diff(flag.matrix()) < 1e-15);
    let model = c.model().unwrap();
    assert!(feasible(&model, ModelClass::NchvLocal(0)));
    assert!(!feasible(&model, ModelClass::NchvLocal(1)));
    assert!(!feasible(&model, ModelClass::Gnchv));
    assert!(feasible(&model, ModelClass::Glhv));
}

fn kcbs_samples(points: &[f64]) -> Vec<(f64, hvlab_core::scenario::EmpiricalModel)> {
    points
        .iter()
        .map(|&c0| (c0, build_kcbs(c0).unwrap().model().unwrap()))
        .collect()
}

#[test]
fn active_set_over_the_kcbs_window() {
    let samples = kcbs_samples(&[0.125, 0.1875, 0.25]);
    let r = active_set_probe(&samples, ModelClass::Glhv, true, DEFAULT_STRATEGY_CAP).unwrap();
    assert_eq!(r.strategy_count, 486);
    assert_eq!(r.zero_sets.len(), 3);
    assert!(!r.always_zero.is_empty());
    for z in &r.zero_sets {
        assert!(r.always_zero.iter().all(|i| z.contains(i)));
    }
}

#[test]
fn active_set_of_one_sample_is_its_zero_set() {
    let samples = kcbs_samples(&[0.25]);
    let r = active_set_probe(&samples, ModelClass::Glhv, true, DEFAULT_STRATEGY_CAP).unwrap();
    assert_eq!(r.always_zero, r.zero_sets[0]);
    assert!(r.stable);
}

#[test]
fn infeasible_sample_is_an_error() {
    let samples = kcbs_samples(&[0.25, 0.5]);
    let err = active_set_probe(&samples, ModelClass::Gnchv, true, DEFAULT_STRATEGY_CAP).unwrap_err();
    assert!(matches!(err, HvlpError::InfeasibleSample { index: 0 }), "{err}");
}

#[test]
fn chsh_at_quarter() {
    let s = chsh_smax(0.25).unwrap();
    assert!((s.closed_form - 2.0 * (79.0f64 / 64.0).sqrt()).abs() < 1e-12);
    assert!((s.optimized - 2.2220486).abs() < 1e-6);
}

#[test]
fn optimized_aux_value_at_half_is_below_the_maximally_entangled_form() {
    let aux = aux_witness_f(0.5).unwrap();
    assert!(aux.optimized <= aux_witness_closed_form(0.5f64.sqrt()) + 1e-9);
}

#[test]
fn aux_disagreement_is_recorded_not_hidden() {
    let (r, _) = kcbs_report(1.0, &ReportOptions::default()).unwrap();
    let closed = r.scalar("aux_f_closed_form").unwrap().value.unwrap();
    let opt = r.scalar("aux_f_optimized").unwrap().value.unwrap();
    assert!((closed - aux_witness_closed_form(1.0)).abs() < 1e-12);
    if (closed - opt).abs() > 1e-6 {
        assert!(r.notes.iter().any(|n| n.starts_with("auxiliary witness")));
    }
}

#[test]
fn sweeps_leave_off_window_glhv_untested() {
    let opts = ReportOptions {
        optimizers: false,
        sweep: true,
        ..ReportOptions::default()
    };
    let (r, _) = kcbs_report(0.5, &opts).unwrap();
    assert_eq!(r.verdict("glhv").unwrap().status, Status::Untested);
    assert_eq!(r.verdict("gnchv").unwrap().status, Status::Infeasible);
    let (r, _) = kcbs_report(0.25, &opts).unwrap();
    assert_eq!(r.verdict("glhv").unwrap().status, Status::Feasible);
}
