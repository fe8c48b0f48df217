#![allow(dead_code)]

use hvlab_core::constructions::{build_flagged_werner, build_kcbs, build_ppath, kcbs_party};
use hvlab_core::hvlp::{fit_local_model, SeparableComponent, DEFAULT_STRATEGY_CAP};
use hvlab_core::qmath::{c, ComplexMatrix, DensityOperator, Ket};
use hvlab_core::scenario::{EmpiricalModel, QuantumMeasurement, QuantumParty, QuantumScenario};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_ket(rng: &mut ChaCha8Rng, dim: usize) -> Ket {
    Ket::normalized(
        (0..dim)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect(),
    )
}

/// Random binary qubit measurement in a random orthonormal basis.
pub fn random_qubit_measurement(rng: &mut ChaCha8Rng, id: &str) -> QuantumMeasurement {
    let k = random_ket(rng, 2);
    let p = k.projector();
    let q = &ComplexMatrix::identity(2) - &p;
    QuantumMeasurement::new(id, vec![p, q], vec![1.0, -1.0])
}

/// Qubit with two random measurements against the KCBS qutrit.
pub fn qubit_qutrit_scenario(rng: &mut ChaCha8Rng) -> QuantumScenario {
    let alice = QuantumParty {
        name: "A".into(),
        dim: 2,
        measurements: vec![
            random_qubit_measurement(rng, "A1"),
            random_qubit_measurement(rng, "A2"),
        ],
        contexts: vec![vec!["A1".into()], vec!["A2".into()]],
    };
    let tested = (0..2).flat_map(|a| (0..5).map(move |b| vec![a, b])).collect();
    QuantumScenario::new(vec![alice, kcbs_party("B")], tested).expect("valid scenario")
}

/// Pure state mixed with white noise at visibility `t`.
pub fn noisy_state(rng: &mut ChaCha8Rng, dim: usize, t: f64) -> DensityOperator {
    let pure = DensityOperator::from_ket(&random_ket(rng, dim), vec![dim]).unwrap();
    let white = DensityOperator::new(
        ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
        vec![dim],
    )
    .unwrap();
    DensityOperator::mixture(&[(t, &pure), (1.0 - t, &white)]).unwrap()
}

/// Separable qubit-qutrit instance whose qutrit factors stay inside the
/// KCBS noncontextual region (visibility ≤ 1/2).
pub fn random_separable(rng: &mut ChaCha8Rng) -> (QuantumScenario, Vec<SeparableComponent>) {
    let qs = qubit_qutrit_scenario(rng);
    let n = rng.gen_range(1..=3);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[..n - 1].iter().sum();
    weights[n - 1] = 1.0 - head;
    let components = weights
        .into_iter()
        .map(|weight| {
            let (ta, tb) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=0.5));
            let states = vec![noisy_state(rng, 2, ta), noisy_state(rng, 3, tb)];
            let local_models = states
                .iter()
                .enumerate()
                .map(|(p, rho)| {
                    let party = &qs.scenario().parties[p];
                    let blocks: Vec<Vec<f64>> = (0..party.contexts.len())
                        .map(|ctx| {
                            party.contexts[ctx]
                                .joint_outcomes
                                .iter()
                                .map(|t| rho.expectation(&qs.local_projector(p, ctx, t)))
                                .collect()
                        })
                        .collect();
                    fit_local_model(party, &blocks, DEFAULT_STRATEGY_CAP)
                        .expect("fit runs")
                        .expect("factor is noncontextual")
                })
                .collect();
            SeparableComponent {
                weight,
                states,
                local_models,
            }
        })
        .collect();
    (qs, components)
}

/// Models exercised by the hierarchy checks.
pub fn corpus(rng: &mut ChaCha8Rng) -> Vec<(String, EmpiricalModel)> {
    let mut out = Vec::new();
    for h0 in [0.1, 0.3, 0.5f64.sqrt(), 0.9] {
        out.push((format!("ppath h0={h0}"), build_ppath(h0, 0.0).unwrap().model().unwrap()));
    }
    out.push(("ppath phi=0.7".into(), build_ppath(0.6, 0.7).unwrap().model().unwrap()));
    for c0 in [0.0, 0.25, 0.5, 0.85, 1.0] {
        out.push((format!("kcbs c0={c0}"), build_kcbs(c0).unwrap().model().unwrap()));
    }
    for (eps, w) in [(0.5, 0.5), (0.0, 1.0), (1.0, 0.0), (0.2, 0.9), (0.8, 0.3)] {
        out.push((
            format!("werner eps={eps} w={w}"),
            build_flagged_werner(eps, w).unwrap().model().unwrap(),
        ));
    }
    for i in 0..6 {
        let (qs, comps) = random_separable(rng);
        let rho = hvlab_core::hvlp::separable_state(&comps).unwrap();
        out.push((format!("separable #{i}"), qs.born_table(&rho).unwrap()));
    }
    for i in 0..6 {
        let qs = qubit_qutrit_scenario(rng);
        let psi = random_ket(rng, 6);
        let rho = DensityOperator::from_ket(&psi, vec![2, 3]).unwrap();
        out.push((format!("entangled #{i}"), qs.born_table(&rho).unwrap()));
    }
    out
}
