//! Multi-start coordinate search, used as an independent numeric oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchOptions {
    pub starts: usize,
    pub seed: u64,
    /// Stop once the step size falls below this.
    pub tol: f64,
    pub initial_step: f64,
    pub max_evaluations_per_start: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            starts: 32,
            seed: 0x5eed,
            tol: 1e-10,
            initial_step: 0.5,
            max_evaluations_per_start: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub value: f64,
    pub point: Vec<f64>,
    pub evaluations: usize,
}

/// Minimizes `f` over ℝᵈ from `opts.starts` uniform starts in `[lo, hi)ᵈ`.
pub fn multistart_minimize(
    f: impl Fn(&[f64]) -> f64,
    dim: usize,
    (lo, hi): (f64, f64),
    opts: &SearchOptions,
) -> SearchResult {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<SearchResult> = None;
    let mut total = 0;
    for _ in 0..opts.starts.max(1) {
        let start: Vec<f64> = (0..dim).map(|_| rng.gen_range(lo..hi)).collect();
        let r = coordinate_search(&f, start, opts);
        total += r.evaluations;
        if best.as_ref().map_or(true, |b| r.value < b.value) {
            best = Some(r);
        }
    }
    let mut best = best.expect("at least one start");
    best.evaluations = total;
    best
}

/// Compass search along the coordinate axes with step halving.
pub fn coordinate_search(f: &impl Fn(&[f64]) -> f64, mut x: Vec<f64>, opts: &SearchOptions) -> SearchResult {
    let mut fx = f(&x);
    let mut evals = 1;
    let mut step = opts.initial_step;
    while step >= opts.tol && evals < opts.max_evaluations_per_start {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let old = x[i];
                x[i] = old + dir * step;
                let v = f(&x);
                evals += 1;
                if v < fx {
                    fx = v;
                    improved = true;
                    break;
                }
                x[i] = old;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    SearchResult {
        value: fx,
        point: x,
        evaluations: evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + 0.5 * x[0] * x[1];
        let r = multistart_minimize(f, 2, (-5.0, 5.0), &SearchOptions::default());
        // gradient: 2x + y/2 = 2, x/2 + 6y = -12
        let det = 2.0 * 6.0 - 0.25;
        let x = (2.0 * 6.0 - 0.5 * -12.0) / det;
        let y = (2.0 * -12.0 - 0.5 * 2.0) / det;
        assert!((r.point[0] - x).abs() < 1e-7 && (r.point[1] - y).abs() < 1e-7, "{:?}", r.point);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let f = |x: &[f64]| x[0].sin() + (2.0 * x[1]).cos();
        let a = multistart_minimize(f, 2, (0.0, 6.0), &SearchOptions::default());
        let b = multistart_minimize(f, 2, (0.0, 6.0), &SearchOptions::default());
        assert_eq!(a, b);
        assert!((a.value + 2.0).abs() < 1e-12);
    }
}
