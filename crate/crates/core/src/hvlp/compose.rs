//! Explicit hidden-variable models and their composition.
//!
//! A GLHV model whose block responses each admit a local noncontextual
//! refinement glues into a GNCHV model over ξ = (λ, σ₁, …, σₙ). Separable
//! states are the special case where λ labels the product components.

use super::problem::build_problem;
use super::solve::{solve_feasibility, Certificate};
use super::strategy::{enumerate_strategies, ModelClass, Strategy, StrategySet};
use super::{HvlpError, Result};
use crate::qmath::{kron_all, DensityOperator};
use crate::scenario::{decode, encode, EmpiricalModel, Party, QuantumScenario, Scenario};

/// Mixture of per-measurement response functions for a single party.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalNchvModel {
    /// (weight, measurement -> outcome distribution)
    pub components: Vec<(f64, Vec<Vec<f64>>)>,
}

impl LocalNchvModel {
    /// Point mass on one outcome per measurement.
    pub fn deterministic(party: &Party, outcomes: &[usize]) -> Self {
        let responses = party
            .measurements
            .iter()
            .zip(outcomes)
            .map(|(m, &o)| one_hot(m.outcomes, o))
            .collect();
        Self {
            components: vec![(1.0, responses)],
        }
    }

    /// Distribution over the full product tuples of local context `ctx`.
    pub fn context_distribution(&self, party: &Party, ctx: usize) -> Vec<f64> {
        let members = &party.contexts[ctx].members;
        let radices = party.local_radices(ctx);
        let n: usize = radices.iter().product();
        let mut out = vec![0.0; n];
        for (w, resp) in &self.components {
            for (t, o) in out.iter_mut().enumerate() {
                let digits = decode(t, &radices);
                *o += w * members
                    .iter()
                    .zip(&digits)
                    .map(|(&m, &d)| resp[m][d])
                    .product::<f64>();
            }
        }
        out
    }
}

/// One ξ value of a GNCHV model: party -> measurement -> outcome distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct NchvComponent {
    pub weight: f64,
    pub responses: Vec<Vec<Vec<f64>>>,
}

/// GNCHV model with per-measurement, context-independent responses.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct NchvModel {
    pub components: Vec<NchvComponent>,
}

impl NchvModel {
    /// Predicted table of every tested context.
    pub fn tables(&self, scenario: &Scenario) -> Vec<Vec<f64>> {
        (0..scenario.num_contexts())
            .map(|k| {
                let members = scenario.context_members(k);
                let radices = scenario.context_radices(k);
                (0..scenario.context_size(k))
                    .map(|t| {
                        let digits = decode(t, &radices);
                        self.components
                            .iter()
                            .map(|c| {
                                c.weight
                                    * members
                                        .iter()
                                        .zip(&digits)
                                        .map(|(&(p, m), &d)| c.responses[p][m][d])
                                        .product::<f64>()
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Largest entrywise deviation from `model`'s tables.
    pub fn max_deviation(&self, model: &EmpiricalModel) -> f64 {
        max_table_deviation(&self.tables(model.scenario()), model.tables())
    }

    /// Weights over a GNCHV strategy set obtained by expanding each
    /// component's product of response distributions.
    pub fn strategy_weights(&self, strategies: &StrategySet) -> Result<Vec<f64>> {
        if strategies.class != ModelClass::Gnchv {
            return Err(HvlpError::Mismatch(format!(
                "expected gnchv strategies, got {}",
                strategies.class
            )));
        }
        strategies
            .strategies
            .iter()
            .map(|s| match s {
                Strategy::Outcomes(o) => Ok(self
                    .components
                    .iter()
                    .map(|c| {
                        c.weight
                            * o.iter()
                                .enumerate()
                                .flat_map(|(p, outs)| {
                                    outs.iter().enumerate().map(move |(m, &v)| (p, m, v))
                                })
                                .map(|(p, m, v)| c.responses[p][m][v])
                                .product::<f64>()
                    })
                    .sum()),
                Strategy::Blocks(_) => Err(HvlpError::Mismatch("block strategy".into())),
            })
            .collect()
    }
}

/// One λ value of a GLHV model: party -> local context -> distribution over
/// that context's joint outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockComponent {
    pub weight: f64,
    pub blocks: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct BlockModel {
    pub components: Vec<BlockComponent>,
}

impl BlockModel {
    pub fn tables(&self, scenario: &Scenario) -> Vec<Vec<f64>> {
        (0..scenario.num_contexts())
            .map(|k| {
                let ctx = &scenario.tested[k];
                let local: Vec<Vec<usize>> = ctx
                    .iter()
                    .enumerate()
                    .map(|(p, &c)| scenario.parties[p].local_radices(c))
                    .collect();
                let sizes: Vec<usize> = local.iter().map(|r| r.iter().product()).collect();
                let n: usize = sizes.iter().product();
                (0..n)
                    .map(|t| {
                        let parts = decode(t, &sizes);
                        self.components
                            .iter()
                            .map(|comp| {
                                comp.weight
                                    * parts
                                        .iter()
                                        .enumerate()
                                        .map(|(p, &lt)| {
                                            let c = ctx[p];
                                            let tuple = decode(lt, &local[p]);
                                            scenario.parties[p].contexts[c]
                                                .joint_outcomes
                                                .iter()
                                                .position(|j| *j == tuple)
                                                .map_or(0.0, |j| comp.blocks[p][c][j])
                                        })
                                        .product::<f64>()
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn max_deviation(&self, model: &EmpiricalModel) -> f64 {
        max_table_deviation(&self.tables(model.scenario()), model.tables())
    }
}

/// Deterministic GNCHV model carried by a feasible certificate.
pub fn model_from_certificate(
    scenario: &Scenario,
    strategies: &StrategySet,
    cert: &Certificate,
) -> Result<NchvModel> {
    let weights = cert
        .weights
        .as_ref()
        .ok_or_else(|| HvlpError::Mismatch("certificate has no weights".into()))?;
    let mut out = NchvModel::default();
    for &(i, w) in weights {
        let Some(Strategy::Outcomes(o)) = strategies.strategies.get(i) else {
            return Err(HvlpError::Mismatch(format!("strategy {i} is not an outcome strategy")));
        };
        if o.len() != scenario.parties.len() {
            return Err(HvlpError::Mismatch("strategy does not cover every party".into()));
        }
        out.components.push(NchvComponent {
            weight: w,
            responses: o
                .iter()
                .zip(&scenario.parties)
                .map(|(outs, party)| LocalNchvModel::deterministic(party, outs).components[0].1.clone())
                .collect(),
        });
    }
    Ok(out)
}

/// Looks for a local noncontextual model of one party's block response.
///
/// `blocks[c]` is a distribution over `party.contexts[c].joint_outcomes`.
/// Returns `Ok(None)` when the response is contextual.
pub fn fit_local_model(
    party: &Party,
    blocks: &[Vec<f64>],
    cap: usize,
) -> Result<Option<LocalNchvModel>> {
    if blocks.len() != party.contexts.len() {
        return Err(HvlpError::Mismatch(format!(
            "{} block distributions for {} contexts",
            blocks.len(),
            party.contexts.len()
        )));
    }
    let scenario = Scenario::new(
        vec![party.clone()],
        (0..party.contexts.len()).map(|c| vec![c]).collect(),
    )?;
    let tables: Vec<Vec<f64>> = blocks
        .iter()
        .enumerate()
        .map(|(c, b)| expand_block(party, c, b))
        .collect();
    let model = EmpiricalModel::new(scenario.clone(), tables)?;
    let strategies = enumerate_strategies(&scenario, ModelClass::NchvLocal(0), cap)?;
    let problem = build_problem(&model, &strategies, false)?;
    let cert = solve_feasibility(&problem)?;
    let Some(weights) = cert.weights else {
        return Ok(None);
    };
    Ok(Some(LocalNchvModel {
        components: weights
            .into_iter()
            .map(|(i, w)| {
                let Strategy::Outcomes(o) = &strategies.strategies[i] else {
                    unreachable!("nchv-local strategies are outcome strategies")
                };
                let det = LocalNchvModel::deterministic(party, &o[0]);
                (w, det.components[0].1.clone())
            })
            .collect(),
    }))
}

/// Glues a GLHV model with a local refinement of every block response into
/// a GNCHV model.
///
/// `refinements[k][p]` refines party `p`'s blocks in component `k`.
pub fn glue_refinement(
    scenario: &Scenario,
    glhv: &BlockModel,
    refinements: &[Vec<LocalNchvModel>],
    tol: f64,
) -> Result<NchvModel> {
    if refinements.len() != glhv.components.len() {
        return Err(HvlpError::Mismatch(format!(
            "{} refinements for {} components",
            refinements.len(),
            glhv.components.len()
        )));
    }
    let mut out = NchvModel::default();
    for (k, (comp, refs)) in glhv.components.iter().zip(refinements).enumerate() {
        if refs.len() != scenario.parties.len() {
            return Err(HvlpError::Mismatch(format!(
                "component {k} has {} party refinements",
                refs.len()
            )));
        }
        for (p, (party, local)) in scenario.parties.iter().zip(refs).enumerate() {
            for c in 0..party.contexts.len() {
                let want = expand_block(party, c, &comp.blocks[p][c]);
                let got = local.context_distribution(party, c);
                let dev = want
                    .iter()
                    .zip(&got)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if dev > tol {
                    return Err(HvlpError::RefinementMismatch(format!(
                        "component {k}, party {}, context {{{}}}: deviation {dev:e}",
                        party.name,
                        party.context_label(c)
                    )));
                }
            }
        }
        let sizes: Vec<usize> = refs.iter().map(|r| r.components.len()).collect();
        let n: usize = sizes.iter().product();
        for idx in 0..n {
            let pick = decode(idx, &sizes);
            let mut weight = comp.weight;
            let mut responses = Vec::with_capacity(refs.len());
            for (r, &i) in refs.iter().zip(&pick) {
                let (w, resp) = &r.components[i];
                weight *= w;
                responses.push(resp.clone());
            }
            out.components.push(NchvComponent { weight, responses });
        }
    }
    Ok(out)
}

/// One term r_μ ρ₁ ⊗ … ⊗ ρₙ of a separable decomposition with a local
/// noncontextual model for each factor.
#[derive(Clone, Debug)]
pub struct SeparableComponent {
    pub weight: f64,
    pub states: Vec<DensityOperator>,
    pub local_models: Vec<LocalNchvModel>,
}

impl SeparableComponent {
    pub fn product_state(&self) -> Result<DensityOperator> {
        let dims: Vec<usize> = self.states.iter().map(|s| s.dim()).collect();
        let m = kron_all(self.states.iter().map(|s| s.matrix()));
        DensityOperator::new(m, dims).map_err(|e| HvlpError::Scenario(e.into()))
    }
}

/// Mixture state Σ r_μ ⊗ρ of separable components.
pub fn separable_state(components: &[SeparableComponent]) -> Result<DensityOperator> {
    let states = components
        .iter()
        .map(|c| c.product_state())
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, &DensityOperator)> =
        components.iter().map(|c| c.weight).zip(states.iter()).collect();
    DensityOperator::mixture(&pairs).map_err(|e| HvlpError::Scenario(e.into()))
}

/// GNCHV model of a separable state over ξ = (μ, λ₁, …, λₙ).
pub fn separable_reduction(
    qs: &QuantumScenario,
    components: &[SeparableComponent],
    tol: f64,
) -> Result<NchvModel> {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if components.iter().any(|c| !(c.weight >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(HvlpError::InvalidWeights(format!(
            "weights must be nonnegative and sum to 1 (sum {total})"
        )));
    }
    let scenario = qs.scenario();
    let mut glhv = BlockModel::default();
    let mut refinements = Vec::with_capacity(components.len());
    for (k, comp) in components.iter().enumerate() {
        if comp.states.len() != scenario.parties.len() || comp.local_models.len() != scenario.parties.len()
        {
            return Err(HvlpError::Mismatch(format!(
                "component {k} does not cover every party"
            )));
        }
        let blocks = scenario
            .parties
            .iter()
            .enumerate()
            .map(|(p, party)| {
                if comp.states[p].dim() != qs.dims()[p] {
                    return Err(HvlpError::Mismatch(format!(
                        "component {k} party {p} has dimension {}",
                        comp.states[p].dim()
                    )));
                }
                Ok((0..party.contexts.len())
                    .map(|c| {
                        party.contexts[c]
                            .joint_outcomes
                            .iter()
                            .map(|t| comp.states[p].expectation(&qs.local_projector(p, c, t)))
                            .collect()
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        glhv.components.push(BlockComponent {
            weight: comp.weight,
            blocks,
        });
        refinements.push(comp.local_models.clone());
    }
    glue_refinement(scenario, &glhv, &refinements, tol)
}

pub(crate) fn max_table_deviation(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Block distribution over joint outcomes, expanded to product tuples.
fn expand_block(party: &Party, ctx: usize, block: &[f64]) -> Vec<f64> {
    let radices = party.local_radices(ctx);
    let mut out = vec![0.0; radices.iter().product()];
    for (t, &p) in party.contexts[ctx].joint_outcomes.iter().zip(block) {
        out[encode(t, &radices)] += p;
    }
    out
}

fn one_hot(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}
