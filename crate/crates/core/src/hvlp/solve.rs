use serde::{Deserialize, Serialize};

use super::problem::FeasibilityProblem;
use super::simplex::{phase_one, solve_dense, SimplexOptions};
use super::strategy::ModelClass;
use super::{HvlpError, Result};

/// Residual bound for a feasible verdict.
pub const FEAS_RESIDUAL_TOL: f64 = 1e-9;
/// Most negative weight tolerated (then clamped to zero).
pub const WEIGHT_NEG_TOL: f64 = 1e-12;
/// Upper bound on `yᵀA` for an accepted Farkas dual.
pub const DUAL_SLACK_TOL: f64 = 1e-10;
/// Lower bound on `yᵀb` for an accepted Farkas dual.
pub const DUAL_MARGIN_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Feasible,
    Infeasible,
}

/// Outcome of a feasibility solve, with the data needed to re-verify it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub class: ModelClass,
    pub verdict: Verdict,
    /// max |A w − b| for feasible verdicts, 0 otherwise.
    pub residual: f64,
    /// yᵀb for infeasible verdicts, 0 otherwise.
    pub margin: f64,
    /// Nonzero strategy weights as (strategy index, weight).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<(usize, f64)>>,
    /// Farkas dual, normalized to unit max-norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual: Option<Vec<f64>>,
    pub problem_hash: String,
}

impl Certificate {
    pub fn is_feasible(&self) -> bool {
        self.verdict == Verdict::Feasible
    }

    /// Dense weight vector over all `cols` strategies.
    pub fn dense_weights(&self, cols: usize) -> Option<Vec<f64>> {
        let w = self.weights.as_ref()?;
        let mut out = vec![0.0; cols];
        for &(i, v) in w {
            out[i] = v;
        }
        Some(out)
    }

    /// Re-checks the certificate against `problem` with the acceptance
    /// tolerances. Returns a description of the first failed check.
    pub fn verify(&self, problem: &FeasibilityProblem) -> std::result::Result<(), String> {
        if self.problem_hash != problem.content_hash() {
            return Err("problem hash mismatch".into());
        }
        match self.verdict {
            Verdict::Feasible => {
                let w = self
                    .dense_weights(problem.cols())
                    .ok_or("feasible certificate without weights")?;
                if let Some(v) = w.iter().find(|v| **v < -WEIGHT_NEG_TOL) {
                    return Err(format!("negative weight {v}"));
                }
                let r = problem.residual(&w);
                if r > FEAS_RESIDUAL_TOL {
                    return Err(format!("residual {r:e}"));
                }
                Ok(())
            }
            Verdict::Infeasible => {
                let y = self.dual.as_ref().ok_or("infeasible certificate without dual")?;
                if y.len() != problem.rows() {
                    return Err("dual length".into());
                }
                let slack = problem.apply_transpose(y).into_iter().fold(f64::MIN, f64::max);
                if slack > DUAL_SLACK_TOL {
                    return Err(format!("max yᵀA = {slack:e}"));
                }
                let margin: f64 = y.iter().zip(problem.rhs()).map(|(a, b)| a * b).sum();
                if margin < DUAL_MARGIN_TOL {
                    return Err(format!("yᵀb = {margin:e}"));
                }
                Ok(())
            }
        }
    }
}

/// Decides `∃ w ≥ 0 : A w = b`, returning a checked certificate either way.
///
/// Anything the solver cannot certify within tolerance is reported as
/// [`HvlpError::Inconclusive`].
pub fn solve_feasibility(problem: &FeasibilityProblem) -> Result<Certificate> {
    solve_with(problem, &SimplexOptions::default())
}

pub fn solve_with(problem: &FeasibilityProblem, opts: &SimplexOptions) -> Result<Certificate> {
    let m = problem.rows();
    let n = problem.cols();
    let hash = problem.content_hash();
    let a: Vec<f64> = (0..m)
        .flat_map(|r| problem.row(r).iter().map(|&v| f64::from(v)))
        .collect();
    let b = problem.rhs();
    let res = phase_one(&a, m, n, b, opts).map_err(|e| {
        HvlpError::Inconclusive(format!(
            "iteration cap {} reached (objective {:e})",
            e.iterations, e.objective
        ))
    })?;

    // column j of the sign-adjusted system [S A | I]
    let column = |j: usize| -> Vec<f64> {
        if j < n {
            (0..m).map(|i| res.signs[i] * a[i * n + j]).collect()
        } else {
            (0..m).map(|i| if i == j - n { 1.0 } else { 0.0 }).collect()
        }
    };
    let cols: Vec<Vec<f64>> = res.basis.iter().map(|&j| column(j)).collect();
    let bmat: Vec<Vec<f64>> = (0..m).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    let sb: Vec<f64> = (0..m).map(|i| res.signs[i] * b[i]).collect();

    if let Some(xb) = solve_dense(bmat.clone(), sb) {
        let mut w = vec![0.0; n];
        for (&j, &v) in res.basis.iter().zip(&xb) {
            if j < n {
                w[j] = v;
            }
        }
        if w.iter().all(|&v| v >= -WEIGHT_NEG_TOL) {
            for v in &mut w {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let residual = problem.residual(&w);
            if residual <= FEAS_RESIDUAL_TOL {
                return Ok(Certificate {
                    class: problem.class,
                    verdict: Verdict::Feasible,
                    residual,
                    margin: 0.0,
                    weights: Some(
                        w.iter()
                            .enumerate()
                            .filter(|(_, v)| **v > 0.0)
                            .map(|(i, v)| (i, *v))
                            .collect(),
                    ),
                    dual: None,
                    problem_hash: hash,
                });
            }
        }
    }

    // Bᵀ u = c_B with unit cost on artificials; y = S u is a Farkas dual
    let cb: Vec<f64> = res.basis.iter().map(|&j| if j >= n { 1.0 } else { 0.0 }).collect();
    let bt: Vec<Vec<f64>> = cols.clone();
    let u = solve_dense(bt, cb)
        .ok_or_else(|| HvlpError::Inconclusive("singular terminal basis".into()))?;
    let mut y: Vec<f64> = u.iter().zip(&res.signs).map(|(u, s)| u * s).collect();
    let scale = y.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Err(HvlpError::Inconclusive(format!(
            "no feasible point and zero dual (objective {:e})",
            res.objective
        )));
    }
    for v in &mut y {
        *v /= scale;
    }
    let cert = Certificate {
        class: problem.class,
        verdict: Verdict::Infeasible,
        residual: 0.0,
        margin: y.iter().zip(b).map(|(a, b)| a * b).sum(),
        weights: None,
        dual: Some(y),
        problem_hash: hash,
    };
    cert.verify(problem)
        .map_err(|e| HvlpError::Inconclusive(format!("dual rejected: {e}")))?;
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(matrix: Vec<Vec<u8>>, rhs: Vec<f64>) -> FeasibilityProblem {
        FeasibilityProblem::from_parts(ModelClass::Gnchv, matrix, rhs).unwrap()
    }

    #[test]
    fn feasible_mixture() {
        // two coins with marginals (0.3, 0.7) for both
        let p = problem(
            vec![
                vec![1, 1, 0, 0],
                vec![0, 0, 1, 1],
                vec![1, 0, 1, 0],
                vec![0, 1, 0, 1],
            ],
            vec![0.3, 0.7, 0.4, 0.6],
        );
        let c = solve_feasibility(&p).unwrap();
        assert!(c.is_feasible());
        c.verify(&p).unwrap();
    }

    #[test]
    fn infeasible_with_dual() {
        // x0 = 0.6, x0 + x1 = 0.5
        let p = problem(vec![vec![1, 0], vec![1, 1]], vec![0.6, 0.5]);
        let c = solve_feasibility(&p).unwrap();
        assert_eq!(c.verdict, Verdict::Infeasible);
        c.verify(&p).unwrap();
        assert!((c.margin - 0.1).abs() < 1e-12);
    }

    #[test]
    fn tampered_certificate_fails_verification() {
        let p = problem(vec![vec![1, 0], vec![0, 1]], vec![0.5, 0.5]);
        let mut c = solve_feasibility(&p).unwrap();
        c.weights = Some(vec![(0, 0.5), (1, 0.4)]);
        assert!(c.verify(&p).is_err());
        c.problem_hash = "00".into();
        assert!(c.verify(&p).unwrap_err().contains("hash"));
    }

    #[test]
    fn certificate_json_round_trip() {
        let p = problem(vec![vec![1, 0], vec![1, 1]], vec![0.6, 0.5]);
        let c = solve_feasibility(&p).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"verdict\":\"infeasible\""));
        let back: Certificate = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
