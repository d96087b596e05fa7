//! Cyclic coordinate descent for `min ½βᵀAβ − βᵀa + λ Σ_j w_j |β_j|`.
//!
//! `A` is symmetric positive semidefinite. Every coordinate carries weight
//! `w_j = 1` except the intercept, which is unpenalized when
//! `penalize_intercept` is false. The solver keeps the gradient `Aβ − a`
//! current, so a sweep costs `O(d)` plus `O(d)` per coordinate that moves.

use ndarray::{Array1, Array2};

use crate::coeffs::CoefficientVector;
use crate::error::{ensure_len, DhsqrError, Result};
use crate::select::{best_mean, SelectionRule, ValidationScore};

/// Diagonal entries below this are treated as carrying no curvature.
pub const DIAGONAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedQuadratic {
    pub a_mat: Array2<f64>,
    pub a_vec: Array1<f64>,
    pub lambda: f64,
    pub penalize_intercept: bool,
}

impl PenalizedQuadratic {
    pub fn new(a_mat: Array2<f64>, a_vec: Array1<f64>, lambda: f64) -> Self {
        PenalizedQuadratic {
            a_mat,
            a_vec,
            lambda,
            penalize_intercept: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.a_vec.len()
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        PenalizedQuadratic {
            lambda,
            ..self.clone()
        }
    }

    #[inline]
    pub fn penalty_weight(&self, j: usize) -> f64 {
        if j == 0 && !self.penalize_intercept {
            0.0
        } else {
            self.lambda
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        ensure_len(d, self.a_mat.nrows())?;
        ensure_len(d, self.a_mat.ncols())?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(DhsqrError::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        for i in 0..d {
            if self.a_mat[[i, i]].is_nan() || self.a_mat[[i, i]] < 0.0 {
                return Err(DhsqrError::Config(format!(
                    "negative diagonal entry at {i}"
                )));
            }
            for j in (i + 1)..d {
                let (u, v) = (self.a_mat[[i, j]], self.a_mat[[j, i]]);
                if (u - v).abs() > 1e-10 * (1.0 + u.abs().max(v.abs())) {
                    return Err(DhsqrError::Config(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if !self.a_vec.iter().all(|v| v.is_finite()) || !self.a_mat.iter().all(|v| v.is_finite()) {
            return Err(DhsqrError::NumericalFailure(
                "non-finite problem data".into(),
            ));
        }
        Ok(())
    }

    /// `½βᵀAβ − βᵀa + Σ λ_j|β_j|`.
    pub fn objective(&self, beta: &Array1<f64>) -> f64 {
        let ab = self.a_mat.dot(beta);
        0.5 * beta.dot(&ab) - beta.dot(&self.a_vec) + self.penalty(beta)
    }

    fn penalty(&self, beta: &Array1<f64>) -> f64 {
        beta.iter()
            .enumerate()
            .map(|(j, b)| self.penalty_weight(j) * b.abs())
            .sum()
    }

    /// Smallest λ at which `β = 0` is optimal (ignoring an unpenalized
    /// intercept).
    pub fn lambda_max(&self) -> f64 {
        self.a_vec
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != 0 || self.penalize_intercept)
            .fold(0.0, |acc, (_, v)| acc.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once no coordinate moves by more than this in a sweep and the
    /// KKT residual is at most `tol·(1 + |a|_∞)`.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub beta: CoefficientVector,
    pub sweeps: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Coordinates held at zero because `A_jj < DIAGONAL_FLOOR`.
    pub frozen: Vec<usize>,
}

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[inline]
fn coordinate_violation(grad_j: f64, beta_j: f64, lambda_j: f64) -> f64 {
    if beta_j != 0.0 {
        (grad_j + lambda_j * beta_j.signum()).abs()
    } else {
        (grad_j.abs() - lambda_j).max(0.0)
    }
}

/// Largest per-coordinate violation of the optimality conditions.
/// Zero exactly when `beta` minimizes the problem.
pub fn kkt_residual(q: &PenalizedQuadratic, beta: &CoefficientVector) -> Result<f64> {
    ensure_len(q.dim(), beta.len())?;
    let grad = q.a_mat.dot(beta.as_array()) - &q.a_vec;
    Ok(kkt_from_grad(q, beta.as_array(), &grad, &[]))
}

fn kkt_from_grad(
    q: &PenalizedQuadratic,
    beta: &Array1<f64>,
    grad: &Array1<f64>,
    frozen: &[usize],
) -> f64 {
    (0..q.dim())
        .filter(|j| !frozen.contains(j))
        .map(|j| coordinate_violation(grad[j], beta[j], q.penalty_weight(j)))
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent in ascending index order, warm-started at
/// `beta_init`.
pub fn solve(
    q: &PenalizedQuadratic,
    beta_init: &CoefficientVector,
    opts: SolverOptions,
) -> Result<SolverReport> {
    q.validate()?;
    ensure_len(q.dim(), beta_init.len())?;
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(DhsqrError::Config(
            "solver tolerance must be positive".into(),
        ));
    }
    let d = q.dim();
    let a = &q.a_mat;
    let mut beta = beta_init.as_array().clone();

    let mut frozen = Vec::new();
    for j in 0..d {
        if a[[j, j]] < DIAGONAL_FLOOR {
            frozen.push(j);
            beta[j] = 0.0;
        }
    }
    if !frozen.is_empty() {
        log::debug!("coordinates {frozen:?} have degenerate curvature and are held at zero");
    }

    let mut grad = a.dot(&beta) - &q.a_vec;
    let kkt_tol = opts.tol * (1.0 + q.a_vec.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    #[cfg(debug_assertions)]
    let mut last_obj = smooth_plus_penalty(q, &beta, &grad);

    let mut sweeps = 0;
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..d {
            let ajj = a[[j, j]];
            if ajj < DIAGONAL_FLOOR {
                continue;
            }
            let old = beta[j];
            let partial = ajj * old - grad[j];
            let new = soft_threshold(partial, q.penalty_weight(j)) / ajj;
            if new != old {
                let delta = new - old;
                // A is symmetric; row j is contiguous.
                grad.scaled_add(delta, &a.row(j));
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if !max_change.is_finite() || !grad.iter().all(|g| g.is_finite()) {
            return Err(DhsqrError::NumericalFailure(format!(
                "non-finite iterate after {sweeps} sweeps"
            )));
        }
        #[cfg(debug_assertions)]
        {
            let obj = smooth_plus_penalty(q, &beta, &grad);
            debug_assert!(
                obj <= last_obj + 1e-9 * (1.0 + last_obj.abs()),
                "objective increased from {last_obj} to {obj}"
            );
            last_obj = obj;
        }
        if max_change <= opts.tol {
            // Refresh the maintained gradient to shed accumulated drift.
            grad = a.dot(&beta) - &q.a_vec;
            kkt = kkt_from_grad(q, &beta, &grad, &frozen);
            if kkt <= kkt_tol {
                converged = true;
                break;
            }
            if max_change == 0.0 {
                break;
            }
        }
    }
    if !converged {
        grad = a.dot(&beta) - &q.a_vec;
        kkt = kkt_from_grad(q, &beta, &grad, &frozen);
        log::debug!("coordinate descent stopped after {sweeps} sweeps with KKT residual {kkt:e}");
    }
    Ok(SolverReport {
        beta: CoefficientVector::from(beta),
        sweeps,
        kkt_residual: kkt,
        converged,
        frozen,
    })
}

// ½βᵀAβ − βᵀa = ½βᵀ(∇ − a) with ∇ = Aβ − a.
#[cfg(debug_assertions)]
fn smooth_plus_penalty(q: &PenalizedQuadratic, beta: &Array1<f64>, grad: &Array1<f64>) -> f64 {
    0.5 * beta.dot(&(grad - &q.a_vec)) + q.penalty(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(1.0, 1.0), 0.0);
    }

    #[test]
    fn separable_problem_solves_in_one_sweep() {
        let a = array![2.5, -0.3, 0.1, -4.0];
        let q = PenalizedQuadratic::new(Array2::eye(4), a.clone(), 0.5);
        let rep = solve(&q, &CoefficientVector::zeros(4), SolverOptions::default()).unwrap();
        for j in 0..4 {
            assert_eq!(rep.beta[j], soft_threshold(a[j], 0.5));
        }
        // One sweep moves coordinates; the second confirms nothing changes.
        assert!(rep.sweeps <= 2);
        assert!(rep.converged);
        assert!(kkt_residual(&q, &rep.beta).unwrap() < 1e-12);
    }

    #[test]
    fn unpenalized_linear_solve() {
        let q = PenalizedQuadratic::new(array![[2.0, 0.0], [0.0, 2.0]], array![4.0, -2.0], 0.0);
        let rep = solve(&q, &CoefficientVector::zeros(2), SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(rep.beta[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.beta[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_is_optimal_above_lambda_max() {
        let q = PenalizedQuadratic::new(array![[2.0, 0.5], [0.5, 1.0]], array![0.7, -1.1], 1.1);
        assert_eq!(kkt_residual(&q, &CoefficientVector::zeros(2)).unwrap(), 0.0);
        let rep = solve(
            &q,
            &CoefficientVector::from_vec(vec![1.0, 1.0]),
            SolverOptions::default(),
        )
        .unwrap();
        assert!(rep.beta.iter().all(|&b| b == 0.0));
        assert_eq!(q.lambda_max(), 1.1);
    }

    #[test]
    fn kkt_residual_of_perturbed_optimum() {
        let a = array![2.0, 0.2, -3.0];
        let q = PenalizedQuadratic::new(Array2::eye(3), a, 0.5);
        let mut beta = CoefficientVector::from_vec(vec![1.5, 0.0, -2.5]);
        assert_abs_diff_eq!(kkt_residual(&q, &beta).unwrap(), 0.0, epsilon = 1e-15);
        beta[0] += 0.01;
        assert_abs_diff_eq!(kkt_residual(&q, &beta).unwrap(), 0.01, epsilon = 1e-12);
    }

    #[test]
    fn unpenalized_intercept_is_free() {
        let mut q = PenalizedQuadratic::new(Array2::eye(2), array![0.3, 0.3], 1.0);
        q.penalize_intercept = false;
        let rep = solve(&q, &CoefficientVector::zeros(2), SolverOptions::default()).unwrap();
        assert_eq!(rep.beta[0], 0.3);
        assert_eq!(rep.beta[1], 0.0);
        assert_eq!(q.lambda_max(), 0.3);
    }

    #[test]
    fn degenerate_diagonal_is_frozen() {
        let q = PenalizedQuadratic::new(array![[1.0, 0.0], [0.0, 0.0]], array![2.0, 5.0], 0.1);
        let rep = solve(
            &q,
            &CoefficientVector::from_vec(vec![0.0, 3.0]),
            SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.frozen, vec![1]);
        assert_eq!(rep.beta[1], 0.0);
        assert_abs_diff_eq!(rep.beta[0], 1.9, epsilon = 1e-12);
        assert!(rep.converged);
    }

    #[test]
    fn invalid_problems_rejected() {
        let q = PenalizedQuadratic::new(array![[1.0, 0.5], [0.0, 1.0]], array![1.0, 1.0], 0.1);
        assert!(matches!(q.validate(), Err(DhsqrError::Config(_))));
        let q = PenalizedQuadratic::new(Array2::eye(2), array![1.0, 1.0], -0.1);
        assert!(q.validate().is_err());
        let q = PenalizedQuadratic::new(Array2::eye(2), array![f64::NAN, 1.0], 0.1);
        assert!(matches!(
            solve(&q, &CoefficientVector::zeros(2), SolverOptions::default()),
            Err(DhsqrError::NumericalFailure(_))
        ));
        let q = PenalizedQuadratic::new(Array2::eye(2), array![1.0, 1.0], 0.1);
        assert!(solve(&q, &CoefficientVector::zeros(3), SolverOptions::default()).is_err());
    }

    #[test]
    fn sweep_limit_reported() {
        let q = PenalizedQuadratic::new(array![[1.0, 0.99], [0.99, 1.0]], array![1.0, -1.0], 0.0);
        let opts = SolverOptions {
            tol: 1e-12,
            max_sweeps: 3,
        };
        let rep = solve(&q, &CoefficientVector::zeros(2), opts).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.sweeps, 3);
        assert!(rep.kkt_residual > 0.0);
    }
}

/// Log-spaced regularization grid from `λ_max` down to `λ_max·min_ratio`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaGrid {
    pub len: usize,
    pub min_ratio: f64,
    pub rule: SelectionRule,
    /// Stop walking the path once this many consecutive points fail to
    /// improve on the best validation loss so far. `None` walks it all.
    pub patience: Option<usize>,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid {
            len: 30,
            min_ratio: 1e-3,
            rule: SelectionRule::default(),
            patience: Some(5),
        }
    }
}

impl LambdaGrid {
    /// Whether a path scored so far (descending λ) can stop early.
    pub fn exhausted(&self, scores: &[ValidationScore]) -> bool {
        let Some(patience) = self.patience else {
            return false;
        };
        let Some(best) = best_mean(scores) else {
            return false;
        };
        scores.len() - 1 - best >= patience
    }

    /// Descending grid values. A degenerate `λ_max` of zero yields `[0]`.
    pub fn values(&self, lambda_max: f64) -> Vec<f64> {
        if lambda_max <= 0.0 || self.len <= 1 {
            return vec![lambda_max.max(0.0)];
        }
        let log_hi = lambda_max.ln();
        let log_lo = (lambda_max * self.min_ratio).ln();
        let steps = (self.len - 1) as f64;
        (0..self.len)
            .map(|k| {
                if k == 0 {
                    lambda_max
                } else {
                    (log_hi + (log_lo - log_hi) * k as f64 / steps).exp()
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod grid_tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_is_log_spaced_and_descending() {
        let g = LambdaGrid::default().values(2.0);
        assert_eq!(g.len(), 30);
        assert_eq!(g[0], 2.0);
        assert_relative_eq!(g[29], 2e-3, max_relative = 1e-12);
        let r = g[1] / g[0];
        for w in g.windows(2) {
            assert!(w[1] < w[0]);
            assert_relative_eq!(w[1] / w[0], r, max_relative = 1e-10);
        }
        assert_eq!(LambdaGrid::default().values(0.0), vec![0.0]);
    }

    #[test]
    fn patience_stops_after_stale_points() {
        let g = LambdaGrid {
            patience: Some(2),
            ..LambdaGrid::default()
        };
        let sc = |v: f64| ValidationScore::from_losses(ndarray::array![v]);
        let rising = [sc(2.0), sc(1.0), sc(1.5)];
        assert!(!g.exhausted(&rising));
        assert!(g.exhausted(&[rising.as_slice(), &[sc(1.0)]].concat()));
        let all = LambdaGrid {
            patience: None,
            ..g
        };
        assert!(!all.exhausted(&[sc(1.0), sc(2.0), sc(3.0), sc(4.0)]));
        assert!(!g.exhausted(&[]));
    }
}
