use std::fmt;

use serde::{Deserialize, Serialize};

use super::{HvlpError, Result};
use crate::scenario::{decode, Scenario};

/// Default bound on the number of enumerated deterministic strategies.
pub const DEFAULT_STRATEGY_CAP: usize = 1_000_000;

/// Hidden-variable model class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelClass {
    /// Noncontextual model of one party's marginal scenario.
    NchvLocal(usize),
    /// Shared hidden variable, arbitrary block response per local context.
    Glhv,
    /// Shared hidden variable, context-independent response per measurement.
    Gnchv,
}

impl fmt::Display for ModelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelClass::NchvLocal(p) => write!(f, "nchv-local({p})"),
            ModelClass::Glhv => write!(f, "glhv"),
            ModelClass::Gnchv => write!(f, "gnchv"),
        }
    }
}

/// A deterministic response descriptor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// party -> measurement -> outcome
    Outcomes(Vec<Vec<usize>>),
    /// party -> local context -> index into that context's joint outcomes
    Blocks(Vec<Vec<usize>>),
}

impl Strategy {
    /// Member-outcome tuple predicted for `party`'s local context `ctx`.
    pub fn local_tuple(&self, scenario: &Scenario, party: usize, ctx: usize) -> Vec<usize> {
        let local = &scenario.parties[party].contexts[ctx];
        match self {
            Strategy::Outcomes(o) => local.members.iter().map(|&m| o[party][m]).collect(),
            Strategy::Blocks(b) => local.joint_outcomes[b[party][ctx]].clone(),
        }
    }

    /// Full member-outcome tuple predicted for tested context `k`.
    pub fn context_tuple(&self, scenario: &Scenario, k: usize) -> Vec<usize> {
        scenario.tested[k]
            .iter()
            .enumerate()
            .flat_map(|(p, &c)| self.local_tuple(scenario, p, c))
            .collect()
    }

    pub fn label(&self, scenario: &Scenario) -> String {
        let parties = match self {
            Strategy::Outcomes(o) => o
                .iter()
                .enumerate()
                .map(|(p, outs)| {
                    let party = &scenario.parties[p];
                    let body = outs
                        .iter()
                        .enumerate()
                        .map(|(m, v)| format!("{}={v}", party.measurements[m].id))
                        .collect::<Vec<_>>()
                        .join(",");
                    format!("{}:{body}", party.name)
                })
                .collect::<Vec<_>>(),
            Strategy::Blocks(b) => b
                .iter()
                .enumerate()
                .map(|(p, blocks)| {
                    let party = &scenario.parties[p];
                    let body = blocks
                        .iter()
                        .enumerate()
                        .map(|(c, &j)| {
                            let t = &party.contexts[c].joint_outcomes[j];
                            let t: Vec<String> = t.iter().map(|x| x.to_string()).collect();
                            format!("{{{}}}=({})", party.context_label(c), t.join(","))
                        })
                        .collect::<Vec<_>>()
                        .join(",");
                    format!("{}:{body}", party.name)
                })
                .collect::<Vec<_>>(),
        };
        parties.join(";")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategySet {
    pub class: ModelClass,
    pub strategies: Vec<Strategy>,
}

impl StrategySet {
    pub fn len(&self) -> usize {
        self.strategies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }
}

/// Number of deterministic strategies of a class, saturating on overflow.
pub fn strategy_count(scenario: &Scenario, class: ModelClass) -> Result<usize> {
    let radices = class_radices(scenario, class)?;
    Ok(radices
        .iter()
        .flatten()
        .fold(1usize, |acc, &r| acc.saturating_mul(r)))
}

/// Per-party digit radices of the strategy counter.
fn class_radices(scenario: &Scenario, class: ModelClass) -> Result<Vec<Vec<usize>>> {
    Ok(match class {
        ModelClass::NchvLocal(p) => {
            let party = scenario
                .parties
                .get(p)
                .ok_or(HvlpError::InvalidParty(p))?;
            vec![party.measurements.iter().map(|m| m.outcomes).collect()]
        }
        ModelClass::Gnchv => scenario
            .parties
            .iter()
            .map(|party| party.measurements.iter().map(|m| m.outcomes).collect())
            .collect(),
        ModelClass::Glhv => scenario
            .parties
            .iter()
            .map(|party| party.contexts.iter().map(|c| c.joint_outcomes.len()).collect())
            .collect(),
    })
}

/// Exhaustive deterministic strategies of `class`, in mixed-radix order with
/// the first party's first digit most significant.
pub fn enumerate_strategies(scenario: &Scenario, class: ModelClass, cap: usize) -> Result<StrategySet> {
    let radices = class_radices(scenario, class)?;
    let count = strategy_count(scenario, class)?;
    if count > cap {
        return Err(HvlpError::StrategyCap { count, cap });
    }
    let flat: Vec<usize> = radices.iter().flatten().copied().collect();
    let strategies = (0..count)
        .map(|idx| {
            let digits = decode(idx, &flat);
            let mut pos = 0;
            let per_party: Vec<Vec<usize>> = radices
                .iter()
                .map(|r| {
                    let part = digits[pos..pos + r.len()].to_vec();
                    pos += r.len();
                    part
                })
                .collect();
            match class {
                ModelClass::Glhv => Strategy::Blocks(per_party),
                _ => Strategy::Outcomes(per_party),
            }
        })
        .collect();
    Ok(StrategySet { class, strategies })
}
