use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::problem::build_problem;
use super::solve::solve_feasibility;
use super::strategy::{enumerate_strategies, ModelClass};
use super::{HvlpError, Result};
use crate::scenario::EmpiricalModel;

/// Zero pattern of the certified weights across a parameter family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveSetReport {
    pub parameters: Vec<f64>,
    pub strategy_count: usize,
    /// Strategy indices with zero weight, per sample.
    pub zero_sets: Vec<Vec<usize>>,
    /// Strategies with zero weight at every sample.
    pub always_zero: Vec<usize>,
    /// Whether every sample has the same zero set.
    pub stable: bool,
}

/// Solves each sample and intersects the zero sets of the returned weights.
///
/// Samples must share one scenario; any sample without a feasible
/// certificate is an error. The result is exploratory: a simplex vertex is
/// one of possibly many feasible points.
pub fn active_set_probe(
    samples: &[(f64, EmpiricalModel)],
    class: ModelClass,
    include_marginal_rows: bool,
    cap: usize,
) -> Result<ActiveSetReport> {
    let Some((_, first)) = samples.first() else {
        return Err(HvlpError::Mismatch("no samples".into()));
    };
    let strategies = enumerate_strategies(first.scenario(), class, cap)?;
    let mut zero_sets = Vec::with_capacity(samples.len());
    for (index, (_, model)) in samples.iter().enumerate() {
        if model.scenario() != first.scenario() {
            return Err(HvlpError::Mismatch(format!("sample {index} has a different scenario")));
        }
        let problem = build_problem(model, &strategies, include_marginal_rows)?;
        let cert = solve_feasibility(&problem)?;
        let w = cert
            .dense_weights(problem.cols())
            .ok_or(HvlpError::InfeasibleSample { index })?;
        zero_sets.push(
            w.iter()
                .enumerate()
                .filter(|(_, v)| **v == 0.0)
                .map(|(i, _)| i)
                .collect::<Vec<_>>(),
        );
    }
    let mut always: BTreeSet<usize> = zero_sets[0].iter().copied().collect();
    for z in &zero_sets[1..] {
        let s: BTreeSet<usize> = z.iter().copied().collect();
        always = always.intersection(&s).copied().collect();
    }
    let stable = zero_sets.windows(2).all(|w| w[0] == w[1]);
    Ok(ActiveSetReport {
        parameters: samples.iter().map(|(p, _)| *p).collect(),
        strategy_count: strategies.len(),
        zero_sets,
        always_zero: always.into_iter().collect(),
        stable,
    })
}
