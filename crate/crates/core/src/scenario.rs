//! Measurement scenarios, empirical models and the Born rule.
//!
//! A [`Scenario`] is purely structural: parties, their measurements, their
//! compatible local contexts and the tested family of multipartite contexts.
//! A [`QuantumScenario`] attaches projective effects to it and produces
//! [`EmpiricalModel`]s from density operators.
//!
//! Every multipartite context owns a probability table indexed by the full
//! product of its member outcomes, ordered lexicographically by
//! (party, member position, outcome) with the last member varying fastest.
//! Tuples whose joint projector vanishes stay in the table with probability
//! zero; the allowed tuples of each local context are its joint PVM outcomes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{
    commutator_norm, kron_all, ComplexMatrix, DensityOperator, QmathError, EPS_NUM,
};

/// Commutation and idempotence tolerance for effects.
pub const COMMUTE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid effects for measurement {0}: {1}")]
    InvalidEffects(String, String),
    #[error("party {party} context {context:?} has non-commuting members (|[P,Q]| = {norm:e})")]
    NonCommuting {
        party: String,
        context: Vec<String>,
        norm: f64,
    },
    #[error("invalid table for context {0}: {1}")]
    InvalidTable(usize, String),
    #[error("unknown measurement {0}")]
    UnknownMeasurement(String),
    #[error("postselected branch has probability {0:e}")]
    ZeroBranch(f64),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error(transparent)]
    Qmath(#[from] QmathError),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

/// Mixed-radix decode, first digit most significant.
pub fn decode(mut index: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for k in (0..radices.len()).rev() {
        out[k] = index % radices[k];
        index /= radices[k];
    }
    out
}

pub fn encode(digits: &[usize], radices: &[usize]) -> usize {
    digits.iter().zip(radices).fold(0, |acc, (&d, &r)| acc * r + d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub id: String,
    pub outcomes: usize,
    /// Numeric value attached to each outcome, used for correlators.
    pub values: Vec<f64>,
}

impl MeasurementSpec {
    /// Outcome `k` carries the value `k`.
    pub fn indexed(id: impl Into<String>, outcomes: usize) -> Self {
        Self {
            id: id.into(),
            outcomes,
            values: (0..outcomes).map(|k| k as f64).collect(),
        }
    }

    pub fn with_values(id: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            outcomes: values.len(),
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalContext {
    /// Measurement indices within the owning party.
    pub members: Vec<usize>,
    /// Member-outcome tuples with a nonzero joint projector.
    pub joint_outcomes: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Party {
    pub name: String,
    pub measurements: Vec<MeasurementSpec>,
    pub contexts: Vec<LocalContext>,
}

impl Party {
    /// Party whose contexts allow every product tuple.
    pub fn new(
        name: impl Into<String>,
        measurements: Vec<MeasurementSpec>,
        contexts: Vec<Vec<usize>>,
    ) -> Self {
        let contexts = contexts
            .into_iter()
            .map(|members| {
                let radices: Vec<usize> = members.iter().map(|&m| measurements[m].outcomes).collect();
                let n: usize = radices.iter().product();
                LocalContext {
                    joint_outcomes: (0..n).map(|k| decode(k, &radices)).collect(),
                    members,
                }
            })
            .collect();
        Self {
            name: name.into(),
            measurements,
            contexts,
        }
    }

    pub fn measurement_index(&self, id: &str) -> Option<usize> {
        self.measurements.iter().position(|m| m.id == id)
    }

    pub fn local_radices(&self, ctx: usize) -> Vec<usize> {
        self.contexts[ctx]
            .members
            .iter()
            .map(|&m| self.measurements[m].outcomes)
            .collect()
    }

    pub fn context_label(&self, ctx: usize) -> String {
        self.contexts[ctx]
            .members
            .iter()
            .map(|&m| self.measurements[m].id.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Cartesian product of per-party context families, first party most significant.
pub fn product_family(counts: &[usize]) -> Vec<Vec<usize>> {
    let n: usize = counts.iter().product();
    (0..n).map(|k| decode(k, counts)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub parties: Vec<Party>,
    /// One local context index per party for each tested multipartite context.
    pub tested: Vec<Vec<usize>>,
}

impl Scenario {
    pub fn new(parties: Vec<Party>, tested: Vec<Vec<usize>>) -> Result<Self> {
        let s = Self { parties, tested };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parties.is_empty() {
            return Err(ScenarioError::Invalid("no parties".into()));
        }
        for p in &self.parties {
            let mut seen = BTreeSet::new();
            for m in &p.measurements {
                if m.outcomes == 0 || m.values.len() != m.outcomes {
                    return Err(ScenarioError::Invalid(format!(
                        "measurement {} has {} outcomes and {} values",
                        m.id,
                        m.outcomes,
                        m.values.len()
                    )));
                }
                if !seen.insert(m.id.as_str()) {
                    return Err(ScenarioError::Invalid(format!("duplicate measurement {}", m.id)));
                }
            }
            for (ci, ctx) in p.contexts.iter().enumerate() {
                let mut members = BTreeSet::new();
                for &m in &ctx.members {
                    if m >= p.measurements.len() {
                        return Err(ScenarioError::Invalid(format!(
                            "party {} context {ci} references measurement {m}",
                            p.name
                        )));
                    }
                    if !members.insert(m) {
                        return Err(ScenarioError::Invalid(format!(
                            "party {} context {ci} repeats measurement {m}",
                            p.name
                        )));
                    }
                }
                let radices = p.local_radices(ci);
                if ctx.joint_outcomes.is_empty() {
                    return Err(ScenarioError::Invalid(format!(
                        "party {} context {ci} has no joint outcomes",
                        p.name
                    )));
                }
                for t in &ctx.joint_outcomes {
                    if t.len() != radices.len() || t.iter().zip(&radices).any(|(o, r)| o >= r) {
                        return Err(ScenarioError::Invalid(format!(
                            "party {} context {ci} has invalid joint outcome {t:?}",
                            p.name
                        )));
                    }
                }
            }
        }
        if self.tested.is_empty() {
            return Err(ScenarioError::Invalid("empty tested family".into()));
        }
        for (k, ctx) in self.tested.iter().enumerate() {
            if ctx.len() != self.parties.len() {
                return Err(ScenarioError::Invalid(format!(
                    "tested context {k} has {} local contexts for {} parties",
                    ctx.len(),
                    self.parties.len()
                )));
            }
            for (p, &c) in ctx.iter().enumerate() {
                if c >= self.parties[p].contexts.len() {
                    return Err(ScenarioError::Invalid(format!(
                        "tested context {k} references local context {c} of party {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_contexts(&self) -> usize {
        self.tested.len()
    }

    /// Outcome radices of tested context `k`, concatenated over parties.
    pub fn context_radices(&self, k: usize) -> Vec<usize> {
        self.tested[k]
            .iter()
            .enumerate()
            .flat_map(|(p, &c)| self.parties[p].local_radices(c))
            .collect()
    }

    pub fn context_size(&self, k: usize) -> usize {
        self.context_radices(k).iter().product()
    }

    /// (party, measurement) for each member slot of context `k`.
    pub fn context_members(&self, k: usize) -> Vec<(usize, usize)> {
        self.tested[k]
            .iter()
            .enumerate()
            .flat_map(|(p, &c)| self.parties[p].contexts[c].members.iter().map(move |&m| (p, m)))
            .collect()
    }

    pub fn context_label(&self, k: usize) -> String {
        self.tested[k]
            .iter()
            .enumerate()
            .map(|(p, &c)| self.parties[p].context_label(c))
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn outcome_labels(&self, k: usize) -> Vec<String> {
        let radices = self.context_radices(k);
        let group: Vec<usize> = self.tested[k]
            .iter()
            .enumerate()
            .map(|(p, &c)| self.parties[p].contexts[c].members.len())
            .collect();
        (0..self.context_size(k))
            .map(|t| {
                let digits = decode(t, &radices);
                let mut parts = Vec::with_capacity(group.len());
                let mut pos = 0;
                for &g in &group {
                    parts.push(
                        digits[pos..pos + g]
                            .iter()
                            .map(|d| d.to_string())
                            .collect::<Vec<_>>()
                            .join(","),
                    );
                    pos += g;
                }
                parts.join("|")
            })
            .collect()
    }

    /// Finds a measurement by id, returning (party, index).
    pub fn find_measurement(&self, id: &str) -> Option<(usize, usize)> {
        self.parties
            .iter()
            .enumerate()
            .find_map(|(p, party)| party.measurement_index(id).map(|m| (p, m)))
    }

    /// Local contexts with at least two members, as (party, context index),
    /// in the order they first appear in the tested family.
    pub fn compatible_blocks(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for ctx in &self.tested {
            for (p, &c) in ctx.iter().enumerate() {
                if self.parties[p].contexts[c].members.len() >= 2 && !out.contains(&(p, c)) {
                    out.push((p, c));
                }
            }
        }
        out
    }

    /// Keeps only the listed (party, measurement) pairs and drops every other
    /// party. Returns the restricted scenario and, for each new tested
    /// context, the first old tested context that maps onto it.
    pub fn restrict(&self, keep: &[(usize, usize)], parties: &[usize]) -> Result<(Scenario, Vec<usize>)> {
        for &(p, m) in keep {
            if p >= self.parties.len() || m >= self.parties[p].measurements.len() {
                return Err(ScenarioError::Invalid(format!(
                    "selection ({p}, {m}) out of range"
                )));
            }
        }
        let mut new_parties = Vec::new();
        // per kept party: old local context -> new local context
        let mut ctx_maps: Vec<Vec<usize>> = Vec::new();
        for &p in parties {
            let party = &self.parties[p];
            let kept: Vec<usize> = (0..party.measurements.len())
                .filter(|m| keep.contains(&(p, *m)))
                .collect();
            let remap = |m: usize| kept.iter().position(|&k| k == m);
            let mut contexts: Vec<LocalContext> = Vec::new();
            let mut map = Vec::with_capacity(party.contexts.len());
            for ctx in &party.contexts {
                let slots: Vec<usize> = ctx
                    .members
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| remap(m).is_some())
                    .map(|(s, _)| s)
                    .collect();
                let members: Vec<usize> = slots.iter().map(|&s| remap(ctx.members[s]).unwrap()).collect();
                let mut joint: Vec<Vec<usize>> = Vec::new();
                for t in &ctx.joint_outcomes {
                    let proj: Vec<usize> = slots.iter().map(|&s| t[s]).collect();
                    if !joint.contains(&proj) {
                        joint.push(proj);
                    }
                }
                joint.sort();
                let new_ctx = LocalContext {
                    members,
                    joint_outcomes: joint,
                };
                let idx = match contexts.iter().position(|c| c.members == new_ctx.members) {
                    Some(i) => i,
                    None => {
                        contexts.push(new_ctx);
                        contexts.len() - 1
                    }
                };
                map.push(idx);
            }
            new_parties.push(Party {
                name: party.name.clone(),
                measurements: kept.iter().map(|&m| party.measurements[m].clone()).collect(),
                contexts,
            });
            ctx_maps.push(map);
        }
        let mut tested: Vec<Vec<usize>> = Vec::new();
        let mut origin = Vec::new();
        for (k, ctx) in self.tested.iter().enumerate() {
            let mapped: Vec<usize> = parties
                .iter()
                .enumerate()
                .map(|(np, &p)| ctx_maps[np][ctx[p]])
                .collect();
            if !tested.contains(&mapped) {
                tested.push(mapped);
                origin.push(k);
            }
        }
        // contexts left without any measurement carry no data
        let nonempty = |t: &Vec<usize>| {
            t.iter()
                .enumerate()
                .any(|(np, &c)| !new_parties[np].contexts[c].members.is_empty())
        };
        if tested.iter().any(nonempty) {
            let (t, o): (Vec<_>, Vec<_>) = tested
                .into_iter()
                .zip(origin)
                .filter(|(t, _)| nonempty(t))
                .unzip();
            tested = t;
            origin = o;
        }
        // drop local contexts that no tested context uses
        for (np, party) in new_parties.iter_mut().enumerate() {
            let used: Vec<usize> = (0..party.contexts.len())
                .filter(|c| tested.iter().any(|t| t[np] == *c))
                .collect();
            let contexts = used.iter().map(|&c| party.contexts[c].clone()).collect();
            party.contexts = contexts;
            for t in tested.iter_mut() {
                t[np] = used.iter().position(|&c| c == t[np]).unwrap();
            }
        }
        Ok((Scenario::new(new_parties, tested)?, origin))
    }
}

/// Context-indexed probability tables over a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalModel {
    scenario: Scenario,
    tables: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceReport {
    pub max_discrepancy: f64,
    /// Pair of tested contexts attaining the maximum, if any overlap exists.
    pub worst_pair: Option<(usize, usize)>,
}

/// Which measurements survive a coarse-graining.
#[derive(Clone, Debug, PartialEq)]
pub enum Selection {
    /// One party's marginal scenario.
    Party(usize),
    /// Keep the listed measurement ids (any party).
    Measurements(Vec<String>),
}

impl EmpiricalModel {
    pub fn new(scenario: Scenario, tables: Vec<Vec<f64>>) -> Result<Self> {
        scenario.validate()?;
        if tables.len() != scenario.num_contexts() {
            return Err(ScenarioError::Invalid(format!(
                "{} tables for {} contexts",
                tables.len(),
                scenario.num_contexts()
            )));
        }
        for (k, t) in tables.iter().enumerate() {
            if t.len() != scenario.context_size(k) {
                return Err(ScenarioError::InvalidTable(
                    k,
                    format!("{} entries, expected {}", t.len(), scenario.context_size(k)),
                ));
            }
            if let Some(v) = t.iter().find(|v| !v.is_finite() || **v < -EPS_NUM) {
                return Err(ScenarioError::InvalidTable(k, format!("entry {v}")));
            }
            let s: f64 = t.iter().sum();
            if (s - 1.0).abs() > EPS_NUM {
                return Err(ScenarioError::InvalidTable(k, format!("sums to {s}")));
            }
        }
        Ok(Self { scenario, tables })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    pub fn table(&self, k: usize) -> &[f64] {
        &self.tables[k]
    }

    /// Marginal of context `k` onto the listed member slots of that context,
    /// indexed in slot order.
    pub fn slot_marginal(&self, k: usize, slots: &[usize]) -> Vec<f64> {
        let radices = self.scenario.context_radices(k);
        let sub: Vec<usize> = slots.iter().map(|&s| radices[s]).collect();
        let mut out = vec![0.0; sub.iter().product()];
        for (t, &p) in self.tables[k].iter().enumerate() {
            let d = decode(t, &radices);
            let digits: Vec<usize> = slots.iter().map(|&s| d[s]).collect();
            out[encode(&digits, &sub)] += p;
        }
        out
    }

    /// Marginal of context `k` onto the given (party, measurement) pairs.
    /// Returns `None` if a pair is not measured in that context.
    pub fn measurement_marginal(&self, k: usize, pairs: &[(usize, usize)]) -> Option<Vec<f64>> {
        let members = self.scenario.context_members(k);
        let slots: Option<Vec<usize>> = pairs
            .iter()
            .map(|pm| members.iter().position(|x| x == pm))
            .collect();
        slots.map(|s| self.slot_marginal(k, &s))
    }

    /// Marginal of context `k` onto party `p`'s local context, over its product tuples.
    pub fn local_marginal(&self, k: usize, p: usize) -> Vec<f64> {
        let members = self.scenario.context_members(k);
        let slots: Vec<usize> = members
            .iter()
            .enumerate()
            .filter(|(_, (q, _))| *q == p)
            .map(|(s, _)| s)
            .collect();
        self.slot_marginal(k, &slots)
    }

    /// Largest marginal disagreement between any two tested contexts on the
    /// measurements they share.
    pub fn check_no_disturbance(&self) -> DisturbanceReport {
        let n = self.scenario.num_contexts();
        let members: Vec<Vec<(usize, usize)>> =
            (0..n).map(|k| self.scenario.context_members(k)).collect();
        let mut report = DisturbanceReport {
            max_discrepancy: 0.0,
            worst_pair: None,
        };
        for a in 0..n {
            for b in (a + 1)..n {
                let mut shared: Vec<(usize, usize)> = members[a]
                    .iter()
                    .filter(|m| members[b].contains(m))
                    .copied()
                    .collect();
                if shared.is_empty() {
                    continue;
                }
                shared.sort();
                let ma = self.measurement_marginal(a, &shared).expect("shared member");
                let mb = self.measurement_marginal(b, &shared).expect("shared member");
                let gap = ma
                    .iter()
                    .zip(&mb)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                if report.worst_pair.is_none() || gap > report.max_discrepancy {
                    report.max_discrepancy = gap;
                    report.worst_pair = Some((a, b));
                }
            }
        }
        report
    }

    /// Coarse-grains the model onto a selection of measurements.
    pub fn marginalize(&self, selection: &Selection) -> Result<EmpiricalModel> {
        let (keep, parties): (Vec<(usize, usize)>, Vec<usize>) = match selection {
            Selection::Party(p) => {
                let party = self
                    .scenario
                    .parties
                    .get(*p)
                    .ok_or_else(|| ScenarioError::Invalid(format!("no party {p}")))?;
                ((0..party.measurements.len()).map(|m| (*p, m)).collect(), vec![*p])
            }
            Selection::Measurements(ids) => {
                let keep = ids
                    .iter()
                    .map(|id| {
                        self.scenario
                            .find_measurement(id)
                            .ok_or_else(|| ScenarioError::UnknownMeasurement(id.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (keep, (0..self.scenario.parties.len()).collect())
            }
        };
        let (scenario, origin) = self.scenario.restrict(&keep, &parties)?;
        let tables = origin
            .iter()
            .enumerate()
            .map(|(nk, &k)| {
                let pairs: Vec<(usize, usize)> = scenario
                    .context_members(nk)
                    .into_iter()
                    .map(|(np, m)| {
                        let p = parties[np];
                        let id = &scenario.parties[np].measurements[m].id;
                        (p, self.scenario.parties[p].measurement_index(id).unwrap())
                    })
                    .collect();
                self.measurement_marginal(k, &pairs).expect("restricted member")
            })
            .collect();
        EmpiricalModel::new(scenario, tables)
    }

    /// Single-context sub-model for tested context `k`.
    pub fn restrict_to_context(&self, k: usize) -> Result<EmpiricalModel> {
        let keep: Vec<(usize, usize)> = self.scenario.context_members(k);
        let mut scenario = self.scenario.clone();
        scenario.tested = vec![self.scenario.tested[k].clone()];
        let (scenario, _) = scenario.restrict(&keep, &(0..self.scenario.parties.len()).collect::<Vec<_>>())?;
        EmpiricalModel::new(scenario, vec![self.tables[k].clone()])
    }

    /// Conditions on `measurement = outcome`, returning the branch probability
    /// and the conditional model of the remaining parties.
    pub fn postselect(&self, measurement: &str, outcome: usize) -> Result<(f64, EmpiricalModel)> {
        let (party, m) = self
            .scenario
            .find_measurement(measurement)
            .ok_or_else(|| ScenarioError::UnknownMeasurement(measurement.into()))?;
        if outcome >= self.scenario.parties[party].measurements[m].outcomes {
            return Err(ScenarioError::Invalid(format!(
                "outcome {outcome} out of range for {measurement}"
            )));
        }
        if self.scenario.parties.len() < 2 {
            return Err(ScenarioError::Invalid(
                "postselection needs at least two parties".into(),
            ));
        }
        let rest: Vec<usize> = (0..self.scenario.parties.len()).filter(|&p| p != party).collect();
        let keep: Vec<(usize, usize)> = rest
            .iter()
            .flat_map(|&p| (0..self.scenario.parties[p].measurements.len()).map(move |mm| (p, mm)))
            .collect();
        let relevant: Vec<usize> = (0..self.scenario.num_contexts())
            .filter(|&k| self.scenario.context_members(k).contains(&(party, m)))
            .collect();
        if relevant.is_empty() {
            return Err(ScenarioError::Invalid(format!(
                "{measurement} is not measured in any tested context"
            )));
        }
        let mut sub = self.scenario.clone();
        sub.tested = relevant.iter().map(|&k| self.scenario.tested[k].clone()).collect();
        let (scenario, origin) = sub.restrict(&keep, &rest)?;
        let branch = self.measurement_marginal(relevant[0], &[(party, m)]).unwrap()[outcome];
        if branch <= EPS_NUM {
            return Err(ScenarioError::ZeroBranch(branch));
        }
        let mut tables = Vec::with_capacity(origin.len());
        for (nk, &sk) in origin.iter().enumerate() {
            let k = relevant[sk];
            let members = self.scenario.context_members(k);
            let cond_slot = members.iter().position(|x| *x == (party, m)).unwrap();
            let rest_slots: Vec<usize> = members
                .iter()
                .enumerate()
                .filter(|(_, (p, _))| *p != party)
                .map(|(s, _)| s)
                .collect();
            let radices = self.scenario.context_radices(k);
            let sub_radices: Vec<usize> = rest_slots.iter().map(|&s| radices[s]).collect();
            let mut t = vec![0.0; scenario.context_size(nk)];
            debug_assert_eq!(t.len(), sub_radices.iter().product::<usize>());
            let mut p_branch = 0.0;
            for (idx, &p) in self.tables[k].iter().enumerate() {
                let d = decode(idx, &radices);
                if d[cond_slot] != outcome {
                    continue;
                }
                p_branch += p;
                let digits: Vec<usize> = rest_slots.iter().map(|&s| d[s]).collect();
                t[encode(&digits, &sub_radices)] += p;
            }
            if p_branch <= EPS_NUM {
                return Err(ScenarioError::ZeroBranch(p_branch));
            }
            tables.push(t.into_iter().map(|x| x / p_branch).collect());
        }
        Ok((branch, EmpiricalModel::new(scenario, tables)?))
    }

    /// Vector of compatible-block marginals: for every local context with at
    /// least two members, its joint product-tuple marginal followed by each
    /// member's single-measurement marginal. Values come from the first
    /// tested context using that block.
    pub fn compatible_marginals(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (p, c) in self.scenario.compatible_blocks() {
            let k = self
                .scenario
                .tested
                .iter()
                .position(|t| t[p] == c)
                .expect("block appears in tested family");
            let members = &self.scenario.parties[p].contexts[c].members;
            let pairs: Vec<(usize, usize)> = members.iter().map(|&m| (p, m)).collect();
            out.extend(self.measurement_marginal(k, &pairs).unwrap());
            for pm in &pairs {
                out.extend(self.measurement_marginal(k, &[*pm]).unwrap());
            }
        }
        out
    }

    /// Expectation of the product of outcome values over the members of
    /// `party`'s local context in tested context `k`.
    pub fn local_product_expectation(&self, k: usize, party: usize) -> f64 {
        let c = self.scenario.tested[k][party];
        let p = &self.scenario.parties[party];
        let members = &p.contexts[c].members;
        let radices = p.local_radices(c);
        self.local_marginal(k, party)
            .iter()
            .enumerate()
            .map(|(t, prob)| {
                let d = decode(t, &radices);
                let v: f64 = members
                    .iter()
                    .zip(&d)
                    .map(|(&m, &o)| p.measurements[m].values[o])
                    .product();
                v * prob
            })
            .sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let contexts: Vec<ContextTableJson> = (0..self.scenario.num_contexts())
            .map(|k| ContextTableJson {
                context_id: self.scenario.context_label(k),
                outcome_labels: self.scenario.outcome_labels(k),
                probabilities: self.tables[k].iter().map(|&p| format_sig17(p)).collect(),
            })
            .collect();
        serde_json::to_value(ModelJson {
            scenario: self.scenario.clone(),
            contexts,
        })
        .expect("model serializes")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("model serializes")
    }

    /// Parses and validates a model document; labels must match the scenario.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: ModelJson =
            serde_json::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))?;
        doc.scenario
            .validate()
            .map_err(|e| ScenarioError::Schema(e.to_string()))?;
        if doc.contexts.len() != doc.scenario.num_contexts() {
            return Err(ScenarioError::Schema(format!(
                "{} context tables for {} tested contexts",
                doc.contexts.len(),
                doc.scenario.num_contexts()
            )));
        }
        let mut tables = Vec::with_capacity(doc.contexts.len());
        for (k, ctx) in doc.contexts.iter().enumerate() {
            if ctx.context_id != doc.scenario.context_label(k) {
                return Err(ScenarioError::Schema(format!(
                    "context {k} id {:?} does not match scenario ({:?})",
                    ctx.context_id,
                    doc.scenario.context_label(k)
                )));
            }
            if ctx.outcome_labels != doc.scenario.outcome_labels(k) {
                return Err(ScenarioError::Schema(format!(
                    "context {k} outcome labels do not match scenario ordering"
                )));
            }
            let probs = ctx
                .probabilities
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| ScenarioError::Schema(format!("probability {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            tables.push(probs);
        }
        EmpiricalModel::new(doc.scenario, tables)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    scenario: Scenario,
    contexts: Vec<ContextTableJson>,
}

#[derive(Serialize, Deserialize)]
struct ContextTableJson {
    context_id: String,
    outcome_labels: Vec<String>,
    probabilities: Vec<String>,
}

/// Decimal string with 17 significant digits.
pub fn format_sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{:.16}", x);
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-30..=16).contains(&exp) {
        return format!("{:.16e}", x);
    }
    let decimals = (16 - exp).max(0) as usize;
    format!("{:.*}", decimals, x)
}

/// Projective measurement with explicit effects on one party's space.
#[derive(Clone, Debug)]
pub struct QuantumMeasurement {
    pub id: String,
    pub effects: Vec<ComplexMatrix>,
    pub values: Vec<f64>,
}

impl QuantumMeasurement {
    pub fn new(id: impl Into<String>, effects: Vec<ComplexMatrix>, values: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            effects,
            values,
        }
    }

    /// Values default to the outcome index.
    pub fn indexed(id: impl Into<String>, effects: Vec<ComplexMatrix>) -> Self {
        let values = (0..effects.len()).map(|k| k as f64).collect();
        Self::new(id, effects, values)
    }
}

#[derive(Clone, Debug)]
pub struct QuantumParty {
    pub name: String,
    pub dim: usize,
    pub measurements: Vec<QuantumMeasurement>,
    /// Contexts as lists of measurement ids.
    pub contexts: Vec<Vec<String>>,
}

/// A scenario realized by projective measurements on a tensor-product space.
#[derive(Clone, Debug)]
pub struct QuantumScenario {
    scenario: Scenario,
    dims: Vec<usize>,
    /// party -> measurement -> outcome -> projector
    effects: Vec<Vec<Vec<ComplexMatrix>>>,
}

fn check_pvm(id: &str, dim: usize, effects: &[ComplexMatrix]) -> Result<()> {
    if effects.is_empty() {
        return Err(ScenarioError::InvalidEffects(id.into(), "no effects".into()));
    }
    let mut sum = ComplexMatrix::zeros(dim, dim);
    for (i, e) in effects.iter().enumerate() {
        if e.rows() != dim || e.cols() != dim {
            return Err(ScenarioError::DimensionMismatch(format!(
                "effect {i} of {id} is {}x{}, party dimension {dim}",
                e.rows(),
                e.cols()
            )));
        }
        if !e.is_hermitian(EPS_NUM) {
            return Err(ScenarioError::InvalidEffects(id.into(), format!("effect {i} not Hermitian")));
        }
        if (e * e).max_abs_diff(e) > EPS_NUM {
            return Err(ScenarioError::InvalidEffects(id.into(), format!("effect {i} not idempotent")));
        }
        for (j, f) in effects.iter().enumerate().skip(i + 1) {
            if (e * f).max_abs() > EPS_NUM {
                return Err(ScenarioError::InvalidEffects(
                    id.into(),
                    format!("effects {i} and {j} not orthogonal"),
                ));
            }
        }
        sum = &sum + e;
    }
    if sum.max_abs_diff(&ComplexMatrix::identity(dim)) > EPS_NUM {
        return Err(ScenarioError::InvalidEffects(id.into(), "effects do not sum to identity".into()));
    }
    Ok(())
}

impl QuantumScenario {
    /// Validates every PVM and context commutation, and derives each local
    /// context's joint outcomes from its nonzero joint projectors.
    pub fn new(parties: Vec<QuantumParty>, tested: Vec<Vec<usize>>) -> Result<Self> {
        let mut specs = Vec::with_capacity(parties.len());
        let mut effects = Vec::with_capacity(parties.len());
        let dims: Vec<usize> = parties.iter().map(|p| p.dim).collect();
        for party in &parties {
            let mut measurements = Vec::new();
            for m in &party.measurements {
                check_pvm(&m.id, party.dim, &m.effects)?;
                if m.values.len() != m.effects.len() {
                    return Err(ScenarioError::InvalidEffects(
                        m.id.clone(),
                        "one value per effect required".into(),
                    ));
                }
                measurements.push(MeasurementSpec::with_values(m.id.clone(), m.values.clone()));
            }
            let mut contexts = Vec::new();
            for ids in &party.contexts {
                let members = ids
                    .iter()
                    .map(|id| {
                        party
                            .measurements
                            .iter()
                            .position(|m| &m.id == id)
                            .ok_or_else(|| ScenarioError::UnknownMeasurement(id.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (i, &a) in members.iter().enumerate() {
                    for &b in &members[i + 1..] {
                        for ea in &party.measurements[a].effects {
                            for eb in &party.measurements[b].effects {
                                let norm = commutator_norm(ea, eb);
                                if norm > COMMUTE_TOL {
                                    return Err(ScenarioError::NonCommuting {
                                        party: party.name.clone(),
                                        context: ids.clone(),
                                        norm,
                                    });
                                }
                            }
                        }
                    }
                }
                let radices: Vec<usize> =
                    members.iter().map(|&m| party.measurements[m].effects.len()).collect();
                let n: usize = radices.iter().product();
                let joint_outcomes = (0..n)
                    .map(|t| decode(t, &radices))
                    .filter(|d| {
                        let proj = members.iter().zip(d).fold(
                            ComplexMatrix::identity(party.dim),
                            |acc, (&m, &o)| &acc * &party.measurements[m].effects[o],
                        );
                        proj.max_abs() > COMMUTE_TOL
                    })
                    .collect();
                contexts.push(LocalContext {
                    members,
                    joint_outcomes,
                });
            }
            specs.push(Party {
                name: party.name.clone(),
                measurements,
                contexts,
            });
            effects.push(
                party
                    .measurements
                    .iter()
                    .map(|m| m.effects.clone())
                    .collect(),
            );
        }
        Ok(Self {
            scenario: Scenario::new(specs, tested)?,
            dims,
            effects,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn effect(&self, party: usize, measurement: usize, outcome: usize) -> &ComplexMatrix {
        &self.effects[party][measurement][outcome]
    }

    /// Product projector of a local context tuple.
    pub fn local_projector(&self, party: usize, ctx: usize, tuple: &[usize]) -> ComplexMatrix {
        let members = &self.scenario.parties[party].contexts[ctx].members;
        members.iter().zip(tuple).fold(
            ComplexMatrix::identity(self.dims[party]),
            |acc, (&m, &o)| &acc * &self.effects[party][m][o],
        )
    }

    /// Born-rule tables for every tested context.
    pub fn born_table(&self, state: &DensityOperator) -> Result<EmpiricalModel> {
        if state.dims() != self.dims.as_slice() {
            return Err(ScenarioError::DimensionMismatch(format!(
                "state dims {:?}, scenario dims {:?}",
                state.dims(),
                self.dims
            )));
        }
        let mut tables = Vec::with_capacity(self.scenario.num_contexts());
        for k in 0..self.scenario.num_contexts() {
            let ctx = &self.scenario.tested[k];
            let locals: Vec<Vec<ComplexMatrix>> = ctx
                .iter()
                .enumerate()
                .map(|(p, &c)| {
                    let radices = self.scenario.parties[p].local_radices(c);
                    let n: usize = radices.iter().product();
                    (0..n)
                        .map(|t| self.local_projector(p, c, &decode(t, &radices)))
                        .collect()
                })
                .collect();
            let party_sizes: Vec<usize> = locals.iter().map(|l| l.len()).collect();
            let n: usize = party_sizes.iter().product();
            let mut table = Vec::with_capacity(n);
            for t in 0..n {
                let parts = decode(t, &party_sizes);
                let proj = kron_all(parts.iter().enumerate().map(|(p, &i)| &locals[p][i]));
                let prob = state.expectation(&proj);
                if prob < -EPS_NUM {
                    return Err(ScenarioError::InvalidTable(k, format!("negative probability {prob}")));
                }
                table.push(prob.max(0.0));
            }
            tables.push(table);
        }
        EmpiricalModel::new(self.scenario.clone(), tables)
    }

    /// Measures `measurement` on its party, keeps `outcome`, and returns the
    /// branch probability with the normalized state of the other parties.
    pub fn postselect_state(
        &self,
        state: &DensityOperator,
        measurement: &str,
        outcome: usize,
    ) -> Result<(f64, DensityOperator)> {
        let (party, m) = self
            .scenario
            .find_measurement(measurement)
            .ok_or_else(|| ScenarioError::UnknownMeasurement(measurement.into()))?;
        let effect = self
            .effects[party][m]
            .get(outcome)
            .ok_or_else(|| ScenarioError::Invalid(format!("outcome {outcome} out of range")))?;
        postselect_state(state, party, effect)
    }

    /// Restricted quantum scenario consistent with [`EmpiricalModel::marginalize`]
    /// for a [`Selection::Measurements`] selection.
    pub fn restrict(&self, ids: &[String]) -> Result<QuantumScenario> {
        let keep = ids
            .iter()
            .map(|id| {
                self.scenario
                    .find_measurement(id)
                    .ok_or_else(|| ScenarioError::UnknownMeasurement(id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let parties: Vec<usize> = (0..self.scenario.parties.len()).collect();
        let (scenario, _) = self.scenario.restrict(&keep, &parties)?;
        let effects = scenario
            .parties
            .iter()
            .enumerate()
            .map(|(p, party)| {
                party
                    .measurements
                    .iter()
                    .map(|spec| {
                        let old = self.scenario.parties[p].measurement_index(&spec.id).unwrap();
                        self.effects[p][old].clone()
                    })
                    .collect()
            })
            .collect();
        Ok(QuantumScenario {
            scenario,
            dims: self.dims.clone(),
            effects,
        })
    }
}

/// Applies `effect` on subsystem `party`, normalizes, and traces that
/// subsystem out.
pub fn postselect_state(
    state: &DensityOperator,
    party: usize,
    effect: &ComplexMatrix,
) -> Result<(f64, DensityOperator)> {
    let dims = state.dims();
    if party >= dims.len() {
        return Err(QmathError::InvalidSubsystem {
            index: party,
            count: dims.len(),
        }
        .into());
    }
    let factors: Vec<ComplexMatrix> = dims
        .iter()
        .enumerate()
        .map(|(p, &d)| {
            if p == party {
                effect.clone()
            } else {
                ComplexMatrix::identity(d)
            }
        })
        .collect();
    let proj = kron_all(factors.iter());
    let prob = state.expectation(&proj);
    if prob <= EPS_NUM {
        return Err(ScenarioError::ZeroBranch(prob));
    }
    let post = (&(&proj * state.matrix()) * &proj).scale_real(1.0 / prob);
    let post = DensityOperator::new(post, dims.to_vec())?;
    Ok((prob, post.trace_out(party)?))
}
