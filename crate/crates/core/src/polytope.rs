//! Odd n-cycle correlator facets and brute-force deterministic bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::EPS_NUM;
use crate::scenario::EmpiricalModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolytopeError {
    #[error("cycle length {0} must be odd and at least 3")]
    CycleLength(usize),
    #[error("length mismatch: {0} correlators, {1} facet signs")]
    Length(usize, usize),
    #[error("correlator {index} = {value} outside [-1, 1]")]
    OutOfRange { index: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, PolytopeError>;

/// Σ γ_j x_j ≥ bound
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetInequality {
    pub gammas: Vec<i8>,
    pub bound: f64,
}

impl FacetInequality {
    pub fn is_symmetric(&self) -> bool {
        self.gammas.iter().all(|&g| g == 1)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.gammas.iter().zip(x).map(|(&g, &v)| f64::from(g) * v).sum()
    }
}

/// The 2ⁿ⁻¹ sign patterns with ∏γ = +1, bound −(n − 2).
///
/// Patterns are listed in binary order with bit j (most significant first)
/// set when γ_j = −1, so the symmetric facet comes first.
pub fn cycle_facets(n: usize) -> Result<Vec<FacetInequality>> {
    if n < 3 || n % 2 == 0 {
        return Err(PolytopeError::CycleLength(n));
    }
    let bound = -((n - 2) as f64);
    Ok((0..1usize << n)
        .map(|k| {
            (0..n)
                .map(|j| if (k >> (n - 1 - j)) & 1 == 1 { -1i8 } else { 1 })
                .collect::<Vec<_>>()
        })
        .filter(|g| g.iter().product::<i8>() == 1)
        .map(|gammas| FacetInequality { gammas, bound })
        .collect())
}

/// Minimum of Σ γ_j b_j b_{j+1} over all b ∈ {±1}ⁿ (indices mod n).
pub fn facet_min_oracle(f: &FacetInequality) -> f64 {
    let n = f.gammas.len();
    (0..1usize << n)
        .map(|k| {
            let b: Vec<f64> = (0..n).map(|j| if (k >> j) & 1 == 1 { -1.0 } else { 1.0 }).collect();
            (0..n)
                .map(|j| f64::from(f.gammas[j]) * b[j] * b[(j + 1) % n])
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// x_j = ⟨B_j B_{j+1}⟩ around a cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationVector(pub Vec<f64>);

impl CorrelationVector {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| v.abs() > 1.0 + EPS_NUM) {
            return Err(PolytopeError::OutOfRange { index, value });
        }
        Ok(Self(x))
    }

    /// Reads the product expectation of each of `party`'s local contexts,
    /// taken in local-context order, from the first tested context using it.
    pub fn from_model(model: &EmpiricalModel, party: usize) -> Result<Self> {
        let s = model.scenario();
        let x = (0..s.parties[party].contexts.len())
            .filter_map(|c| {
                s.tested
                    .iter()
                    .position(|t| t[party] == c)
                    .map(|k| model.local_product_expectation(k, party))
            })
            .collect();
        Self::new(x)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetEvaluation {
    pub gammas: Vec<i8>,
    pub value: f64,
    pub bound: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetScan {
    pub entries: Vec<FacetEvaluation>,
    /// Index of the first violated facet in scan order.
    pub first_violated: Option<usize>,
}

/// Evaluates every facet; a facet is violated when value < bound − ε.
pub fn evaluate_facets(x: &CorrelationVector, facets: &[FacetInequality]) -> Result<FacetScan> {
    let entries = facets
        .iter()
        .map(|f| {
            if f.gammas.len() != x.len() {
                return Err(PolytopeError::Length(x.len(), f.gammas.len()));
            }
            let value = f.value(&x.0);
            Ok(FacetEvaluation {
                gammas: f.gammas.clone(),
                value,
                bound: f.bound,
                violated: value < f.bound - EPS_NUM,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let first_violated = entries.iter().position(|e| e.violated);
    Ok(FacetScan {
        entries,
        first_violated,
    })
}

/// Scans a one-parameter family x(t) on `steps + 1` grid points of [lo, hi]
/// and returns the first facet to cross its bound with the bisected
/// crossing point.
pub fn first_facet_crossing(
    x_of: impl Fn(f64) -> Vec<f64>,
    facets: &[FacetInequality],
    (lo, hi): (f64, f64),
    steps: usize,
) -> Option<(usize, f64)> {
    let margin = |t: f64, f: &FacetInequality| f.value(&x_of(t)) - f.bound;
    let mut prev = lo;
    for k in 0..=steps {
        let t = lo + (hi - lo) * k as f64 / steps as f64;
        let worst = facets
            .iter()
            .enumerate()
            .map(|(i, f)| (i, margin(t, f)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite"))?;
        if worst.1 < 0.0 {
            let f = &facets[worst.0];
            let (mut a, mut b) = (prev, t);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if margin(mid, f) < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Some((worst.0, 0.5 * (a + b)));
        }
        prev = t;
    }
    None
}

/// Deterministic assignment (a₁, a₂, b₂, b₄, b₅) ∈ {±1}⁵.
pub type BellAssignment = [i8; 5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedBellBound {
    pub minimum: f64,
    pub strategies: usize,
    pub minimizers: Vec<BellAssignment>,
    /// Every probability of the binary expansion is nonnegative at every minimizer.
    pub expansion_nonnegative: bool,
}

/// Terms ⟨A₁B₂⟩, ⟨A₁B₄B₅⟩, ⟨A₂B₂⟩, −⟨A₂B₄B₅⟩ of the auxiliary expression.
pub fn generalized_bell_value(s: &BellAssignment, terms: &[bool; 4]) -> f64 {
    let [a1, a2, b2, b4, b5] = s.map(f64::from);
    let t = [a1 * b2, a1 * b4 * b5, a2 * b2, -a2 * b4 * b5];
    t.iter().zip(terms).filter(|(_, &on)| on).map(|(v, _)| v).sum()
}

/// p(a, b₁, b₂ | x) from the binary expansion with deterministic moments
/// ⟨A_x⟩ = a_x, ⟨B_{y₁}⟩ = b₄, ⟨B_{y₂}⟩ = b₅.
pub fn binary_expansion_probability(ax: f64, b4: f64, b5: f64, a: f64, b1: f64, b2: f64) -> f64 {
    (1.0 + a * ax + b1 * b4 + b2 * b5 + b1 * b2 * b4 * b5 + a * b1 * ax * b4 + a * b2 * ax * b5
        + a * b1 * b2 * ax * b4 * b5)
        / 8.0
}

/// Brute-force minimum of the selected auxiliary terms over all 2⁵
/// deterministic assignments.
pub fn generalized_bell_min_terms(terms: &[bool; 4]) -> GeneralizedBellBound {
    let all: Vec<BellAssignment> = (0..32usize)
        .map(|k| std::array::from_fn(|j| if (k >> (4 - j)) & 1 == 1 { -1 } else { 1 }))
        .collect();
    let minimum = all
        .iter()
        .map(|s| generalized_bell_value(s, terms))
        .fold(f64::INFINITY, f64::min);
    let minimizers: Vec<BellAssignment> = all
        .iter()
        .filter(|s| generalized_bell_value(s, terms) == minimum)
        .copied()
        .collect();
    let signs = [1.0, -1.0];
    let expansion_nonnegative = minimizers.iter().all(|s| {
        let [a1, a2, _, b4, b5] = s.map(f64::from);
        [a1, a2].iter().all(|&ax| {
            let mut total = 0.0;
            for a in signs {
                for b1 in signs {
                    for b2 in signs {
                        let p = binary_expansion_probability(ax, b4, b5, a, b1, b2);
                        if p < 0.0 {
                            return false;
                        }
                        total += p;
                    }
                }
            }
            (total - 1.0).abs() < 1e-15
        })
    });
    GeneralizedBellBound {
        minimum,
        strategies: all.len(),
        minimizers,
        expansion_nonnegative,
    }
}

pub fn generalized_bell_min() -> GeneralizedBellBound {
    generalized_bell_min_terms(&[true; 4])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn facet_counts_and_order() {
        let f5 = cycle_facets(5).unwrap();
        assert_eq!(f5.len(), 16);
        assert!(f5[0].is_symmetric());
        assert!(f5.iter().all(|f| f.bound == -3.0));
        assert_eq!(cycle_facets(3).unwrap().len(), 4);
        assert!(cycle_facets(4).is_err());
        assert!(cycle_facets(1).is_err());
    }

    #[test]
    fn oracle_on_odd_parity_pattern() {
        let f = FacetInequality {
            gammas: vec![-1, 1, 1, 1, 1],
            bound: -3.0,
        };
        assert_eq!(facet_min_oracle(&f), -5.0);
        let tri = FacetInequality {
            gammas: vec![1, 1, 1],
            bound: -1.0,
        };
        assert_eq!(facet_min_oracle(&tri), -1.0);
    }

    #[test]
    fn zero_vector_violates_nothing() {
        let x = CorrelationVector::new(vec![0.0; 5]).unwrap();
        let scan = evaluate_facets(&x, &cycle_facets(5).unwrap()).unwrap();
        assert!(scan.entries.iter().all(|e| e.value == 0.0 && !e.violated));
        assert_eq!(scan.first_violated, None);
    }

    #[test]
    fn length_and_range_checks() {
        let x = CorrelationVector::new(vec![0.0; 3]).unwrap();
        assert!(evaluate_facets(&x, &cycle_facets(5).unwrap()).is_err());
        assert!(CorrelationVector::new(vec![1.5]).is_err());
    }

    #[test]
    fn generalized_bell_bounds() {
        let full = generalized_bell_min();
        assert_eq!(full.minimum, -2.0);
        assert!(full.expansion_nonnegative);
        assert_eq!(generalized_bell_min_terms(&[true, false, false, false]).minimum, -1.0);
    }
}
