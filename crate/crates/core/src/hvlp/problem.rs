use sha2::{Digest, Sha256};

use super::strategy::{ModelClass, StrategySet};
use super::{HvlpError, Result};
use crate::scenario::{decode, encode, EmpiricalModel, Selection};

/// `A x = b, x ≥ 0` with a 0/1 incidence matrix `A`.
///
/// Rows are, in order: one per (tested context, product outcome tuple), then
/// optionally the compatible-block rows (joint marginal of every local context
/// with two or more members followed by each member's marginal).
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityProblem {
    pub class: ModelClass,
    rows: usize,
    cols: usize,
    matrix: Vec<u8>,
    rhs: Vec<f64>,
    pub core_rows: usize,
    pub marginal_rows: usize,
    pub row_labels: Vec<String>,
    pub strategy_labels: Vec<String>,
}

impl FeasibilityProblem {
    /// Problem from explicit data; every entry of `matrix` must be 0 or 1.
    pub fn from_parts(class: ModelClass, matrix: Vec<Vec<u8>>, rhs: Vec<f64>) -> Result<Self> {
        let rows = matrix.len();
        let cols = matrix.first().map_or(0, |r| r.len());
        if rhs.len() != rows || matrix.iter().any(|r| r.len() != cols) {
            return Err(HvlpError::Mismatch("ragged problem data".into()));
        }
        if matrix.iter().flatten().any(|&v| v > 1) {
            return Err(HvlpError::Mismatch("matrix entries must be 0 or 1".into()));
        }
        Ok(Self {
            class,
            rows,
            cols,
            matrix: matrix.into_iter().flatten().collect(),
            rhs,
            core_rows: rows,
            marginal_rows: 0,
            row_labels: (0..rows).map(|r| format!("r{r}")).collect(),
            strategy_labels: (0..cols).map(|c| format!("s{c}")).collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, r: usize, c: usize) -> u8 {
        self.matrix[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.matrix[r * self.cols..(r + 1) * self.cols]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// A x
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .filter(|(a, _)| **a == 1)
                    .map(|(_, v)| v)
                    .sum()
            })
            .collect()
    }

    /// yᵀ A
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                if a == 1 {
                    *o += yr;
                }
            }
        }
        out
    }

    /// max |A x − b|
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.apply(x)
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// SHA-256 of (rows, cols, A, b) in canonical order.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.rows as u64).to_le_bytes());
        h.update((self.cols as u64).to_le_bytes());
        h.update(&self.matrix);
        for v in &self.rhs {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Builds the feasibility problem of `strategies` against `model`.
///
/// For [`ModelClass::NchvLocal`] the model is first reduced to that party's
/// marginal scenario.
pub fn build_problem(
    model: &EmpiricalModel,
    strategies: &StrategySet,
    include_marginal_rows: bool,
) -> Result<FeasibilityProblem> {
    let reduced;
    let model = match strategies.class {
        ModelClass::NchvLocal(p) => {
            if p >= model.scenario().parties.len() {
                return Err(HvlpError::InvalidParty(p));
            }
            reduced = if model.scenario().parties.len() == 1 {
                model.clone()
            } else {
                model.marginalize(&Selection::Party(p))?
            };
            &reduced
        }
        _ => model,
    };
    let scenario = model.scenario();
    let cols = strategies.len();
    let mut matrix: Vec<u8> = Vec::new();
    let mut rhs = Vec::new();
    let mut row_labels = Vec::new();

    for k in 0..scenario.num_contexts() {
        let size = scenario.context_size(k);
        let radices = scenario.context_radices(k);
        let mut block = vec![0u8; size * cols];
        for (s, strat) in strategies.strategies.iter().enumerate() {
            let t = encode(&strat.context_tuple(scenario, k), &radices);
            block[t * cols + s] = 1;
        }
        matrix.extend(block);
        rhs.extend_from_slice(model.table(k));
        let id = scenario.context_label(k);
        row_labels.extend(
            scenario
                .outcome_labels(k)
                .into_iter()
                .map(|l| format!("p[{id}]({l})")),
        );
    }
    let core_rows = rhs.len();

    if include_marginal_rows {
        let values = model.compatible_marginals();
        let mut pos = 0;
        for (p, c) in scenario.compatible_blocks() {
            let party = &scenario.parties[p];
            let radices = party.local_radices(c);
            let tuples: Vec<Vec<usize>> = strategies
                .strategies
                .iter()
                .map(|s| s.local_tuple(scenario, p, c))
                .collect();
            let joint: usize = radices.iter().product();
            for t in 0..joint {
                let digits = decode(t, &radices);
                matrix.extend(tuples.iter().map(|x| u8::from(*x == digits)));
                row_labels.push(format!("m[{}:{}]({})", party.name, party.context_label(c), t));
            }
            for (slot, &m) in party.contexts[c].members.iter().enumerate() {
                for o in 0..radices[slot] {
                    matrix.extend(tuples.iter().map(|x| u8::from(x[slot] == o)));
                    row_labels.push(format!(
                        "m[{}:{}]({}={o})",
                        party.name,
                        party.context_label(c),
                        party.measurements[m].id
                    ));
                }
            }
            let n = joint + radices.iter().sum::<usize>();
            rhs.extend_from_slice(&values[pos..pos + n]);
            pos += n;
        }
    }

    let rows = rhs.len();
    Ok(FeasibilityProblem {
        class: strategies.class,
        rows,
        cols,
        matrix,
        rhs,
        core_rows,
        marginal_rows: rows - core_rows,
        row_labels,
        strategy_labels: strategies
            .strategies
            .iter()
            .map(|s| s.label(scenario))
            .collect(),
    })
}
