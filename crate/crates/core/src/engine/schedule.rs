//! Regularization schedules for the per-round lasso problem.

use crate::lasso::LambdaGrid;

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSchedule {
    /// Per round, solve along `grid` (scaled to the assembled problem's
    /// `λ_max`) and keep the solution with the smallest check loss on the
    /// coordinator's validation set.
    Validated(LambdaGrid),
    /// `λ_{N,t} = C·(√(ln N / N) + κ(5t/6, t, t))` with
    /// `κ(a, b, g) = max{ s^a (ln n / n)^{(2g+3)/6}, s^b (ln N / n)^{(g+1)/2} }`.
    /// `C` is user supplied.
    Theorem { c: f64 },
    /// The theorem shape with `C` picked from `grid.values(c_max)`: each
    /// candidate runs all rounds and is scored by the validation check loss
    /// of its final estimate.
    TunedTheorem { c_max: f64, grid: LambdaGrid },
    /// The same λ every round.
    Fixed(f64),
}

impl LambdaSchedule {
    /// `C ∈ [0.1, 1]` on ten log-spaced points.
    pub fn tuned_theorem() -> Self {
        LambdaSchedule::TunedTheorem {
            c_max: 1.0,
            grid: LambdaGrid {
                len: 10,
                min_ratio: 0.1,
                ..LambdaGrid::default()
            },
        }
    }
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Validated(LambdaGrid::default())
    }
}

/// Rate term `κ(a, b, g)` of the iterated estimator.
pub fn kappa(a: f64, b: f64, g: usize, s: usize, n_total: usize, n_local: usize) -> f64 {
    let s = s as f64;
    let n = n_local as f64;
    let big_n = n_total as f64;
    let g = g as f64;
    let first = s.powf(a) * (n.ln() / n).powf((2.0 * g + 3.0) / 6.0);
    let second = s.powf(b) * (big_n.ln() / n).powf((g + 1.0) / 2.0);
    first.max(second)
}

/// The theorem-shaped λ for round `t ≥ 1`.
pub fn theorem_lambda(c: f64, t: usize, s: usize, n_total: usize, n_local: usize) -> f64 {
    let big_n = n_total as f64;
    let tf = t as f64;
    c * ((big_n.ln() / big_n).sqrt() + kappa(5.0 * tf / 6.0, tf, t, s, n_total, n_local))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn theorem_lambda_by_hand() {
        // s=5, N=20000, n=500, t=1.
        let ln_n_over_n = 500f64.ln() / 500.0;
        let first = 5f64.powf(5.0 / 6.0) * ln_n_over_n.powf(5.0 / 6.0);
        let second = 5.0 * (20_000f64.ln() / 500.0);
        let expected = 2.0 * ((20_000f64.ln() / 20_000.0).sqrt() + first.max(second));
        assert_relative_eq!(
            theorem_lambda(2.0, 1, 5, 20_000, 500),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn theorem_lambda_shrinks_with_rounds() {
        let a = theorem_lambda(1.0, 1, 5, 20_000, 500);
        let b = theorem_lambda(1.0, 5, 5, 20_000, 500);
        assert!(b < a);
    }
}
