//! Hidden-variable feasibility as linear programs over deterministic
//! strategies.

mod active_set;
mod compose;
mod problem;
pub mod simplex;
mod solve;
mod strategy;

use thiserror::Error;

use crate::scenario::ScenarioError;

pub use active_set::{active_set_probe, ActiveSetReport};
pub use compose::{
    fit_local_model, glue_refinement, model_from_certificate, separable_reduction,
    separable_state, BlockComponent, BlockModel, LocalNchvModel, NchvComponent, NchvModel,
    SeparableComponent,
};
pub use problem::{build_problem, FeasibilityProblem};
pub use solve::{
    solve_feasibility, solve_with, Certificate, Verdict, DUAL_MARGIN_TOL, DUAL_SLACK_TOL,
    FEAS_RESIDUAL_TOL, WEIGHT_NEG_TOL,
};
pub use strategy::{
    enumerate_strategies, strategy_count, ModelClass, Strategy, StrategySet, DEFAULT_STRATEGY_CAP,
};

#[derive(Debug, Error)]
pub enum HvlpError {
    #[error("strategy count {count} exceeds cap {cap}")]
    StrategyCap { count: usize, cap: usize },
    #[error("no party with index {0}")]
    InvalidParty(usize),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("refinement does not reproduce the block response: {0}")]
    RefinementMismatch(String),
    #[error("sample {index} is not feasible")]
    InfeasibleSample { index: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

pub type Result<T> = std::result::Result<T, HvlpError>;

/// Enumerates, builds and solves in one call.
pub fn check_model(
    model: &crate::scenario::EmpiricalModel,
    class: ModelClass,
    include_marginal_rows: bool,
    cap: usize,
) -> Result<(FeasibilityProblem, Certificate)> {
    let scenario = match class {
        ModelClass::NchvLocal(p) if model.scenario().parties.len() > 1 => model
            .marginalize(&crate::scenario::Selection::Party(p))?
            .scenario()
            .clone(),
        _ => model.scenario().clone(),
    };
    let local_class = match class {
        ModelClass::NchvLocal(_) => ModelClass::NchvLocal(0),
        c => c,
    };
    let mut strategies = enumerate_strategies(&scenario, local_class, cap)?;
    strategies.class = class;
    let problem = build_problem(model, &strategies, include_marginal_rows)?;
    let cert = solve_feasibility(&problem)?;
    Ok((problem, cert))
}

/// Incidence block of one binary pair against its four deterministic
/// assignments: rows (a=0, a=1, b=0, b=1), columns (a, b) in counting order.
pub fn rank_three_block() -> Vec<Vec<f64>> {
    let assignments = crate::scenario::product_family(&[2, 2]);
    (0..4)
        .map(|row| {
            let (slot, value) = (row / 2, row % 2);
            assignments
                .iter()
                .map(|ab| if ab[slot] == value { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}
