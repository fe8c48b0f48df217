//! Dense phase-one simplex with Bland's rule.
//!
//! Solves `min Σ s  s.t.  A x + s = b,  x, s ≥ 0` (rows with negative `b`
//! are negated first) and hands back the terminal basis. Callers recompute
//! primal and dual values from that basis with [`solve_dense`], so the
//! tableau arithmetic only has to pick the right basis.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Smallest tableau entry accepted as a pivot.
    pub pivot_tol: f64,
    /// Reduced costs above `-cost_tol` count as nonnegative.
    pub cost_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            pivot_tol: 1e-9,
            cost_tol: 1e-11,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseOne {
    /// Row signs applied to make the right-hand side nonnegative.
    pub signs: Vec<f64>,
    /// Basic variable per row; indices ≥ n are artificials (n + row).
    pub basis: Vec<usize>,
    pub iterations: usize,
    /// Tableau objective at termination.
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationCap {
    pub iterations: usize,
    pub objective: f64,
}

/// Runs phase one on a dense row-major `a` (m×n) and `b`.
pub fn phase_one(
    a: &[f64],
    m: usize,
    n: usize,
    b: &[f64],
    opts: &SimplexOptions,
) -> Result<PhaseOne, IterationCap> {
    assert_eq!(a.len(), m * n);
    assert_eq!(b.len(), m);
    let width = n + m + 1;
    let rhs = n + m;
    let mut t = vec![0.0; (m + 1) * width];
    let signs: Vec<f64> = b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
    for i in 0..m {
        let row = &mut t[i * width..(i + 1) * width];
        for j in 0..n {
            row[j] = signs[i] * a[i * n + j];
        }
        row[n + i] = 1.0;
        row[rhs] = signs[i] * b[i];
    }
    for j in (0..n).chain(std::iter::once(rhs)) {
        let s: f64 = (0..m).map(|i| t[i * width + j]).sum();
        t[m * width + j] = -s;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut iterations = 0;

    loop {
        let obj_row = m * width;
        let entering = (0..n + m).find(|&j| t[obj_row + j] < -opts.cost_tol);
        let Some(col) = entering else {
            return Ok(PhaseOne {
                signs,
                basis,
                iterations,
                objective: -t[obj_row + rhs],
            });
        };
        if iterations >= opts.max_iterations {
            return Err(IterationCap {
                iterations,
                objective: -t[obj_row + rhs],
            });
        }
        // ratio test; ties go to the smallest basic index
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let piv = t[i * width + col];
            if piv <= opts.pivot_tol {
                continue;
            }
            let ratio = t[i * width + rhs].max(0.0) / piv;
            leave = match leave {
                None => Some((i, ratio)),
                Some((r, best)) => {
                    let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                    if ratio < best - 1e-12 * (1.0 + best.abs()) || (tie && basis[i] < basis[r]) {
                        Some((i, ratio))
                    } else {
                        Some((r, best))
                    }
                }
            };
        }
        let Some((r, _)) = leave else {
            // phase one is bounded below by zero; an unbounded ray means the
            // reduced cost was numerical noise
            t[obj_row + col] = 0.0;
            continue;
        };
        pivot(&mut t, width, m, r, col);
        basis[r] = col;
        iterations += 1;
    }
}

fn pivot(t: &mut [f64], width: usize, m: usize, r: usize, col: usize) {
    let p = t[r * width + col];
    for v in &mut t[r * width..(r + 1) * width] {
        *v /= p;
    }
    let pivot_row: Vec<f64> = t[r * width..(r + 1) * width].to_vec();
    for i in 0..=m {
        if i == r {
            continue;
        }
        let f = t[i * width + col];
        if f == 0.0 {
            continue;
        }
        let row = &mut t[i * width..(i + 1) * width];
        for (v, pv) in row.iter_mut().zip(&pivot_row) {
            if *pv != 0.0 {
                *v -= f * pv;
                if v.abs() < 1e-14 {
                    *v = 0.0;
                }
            }
        }
        row[col] = 0.0;
    }
}

/// Solves the dense square system `mat · x = rhs` by Gaussian elimination
/// with partial pivoting. Returns `None` if a pivot falls below 1e-13.
pub fn solve_dense(mut mat: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    assert_eq!(mat.len(), n);
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| {
            mat[a][col]
                .abs()
                .partial_cmp(&mat[b][col].abs())
                .expect("finite entries")
        })?;
        if mat[piv][col].abs() < 1e-13 {
            return None;
        }
        mat.swap(col, piv);
        rhs.swap(col, piv);
        for r in (col + 1)..n {
            let f = mat[r][col] / mat[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                mat[r][k] -= f * mat[col][k];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|k| mat[r][k] * x[k]).sum();
        x[r] = (rhs[r] - s) / mat[r][r];
    }
    Some(x)
}
