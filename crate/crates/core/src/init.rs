//! Initial estimator: ℓ₁-penalized quantile regression on the central shard.
//!
//! The check loss `ρ_τ(u) = u(τ − 1{u ≤ 0})` is replaced by its convolution
//! with a Gaussian kernel of bandwidth `h₀`,
//!
//! ```text
//! ℓ(u)  = h₀·[φ(u/h₀) + (u/h₀)·(Φ(u/h₀) − (1 − τ))]
//! ℓ′(u) = Φ(u/h₀) − (1 − τ)
//! ```
//!
//! which is convex, smooth and within `h₀·φ(0)` of `ρ_τ`. The penalized
//! objective is minimized by accelerated proximal gradient with backtracking
//! and a momentum restart whenever a step would raise the objective, so the
//! accepted iterates are monotone.

use ndarray::{Array1, ArrayView1, ArrayView2};
use statrs::function::erf::erfc;

use crate::coeffs::CoefficientVector;
use crate::error::{ensure_len, DhsqrError, Result};
use crate::kernel::{check_bandwidth, gaussian_kernel};
use crate::lasso::{soft_threshold, LambdaGrid};
use crate::metrics::check_loss_score;
use crate::select::ValidationScore;

/// `ρ_τ(u)`.
#[inline]
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u > 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Gaussian-smoothed check loss `(ρ_τ * K_{h₀})(u)`.
#[inline]
pub fn smoothed_check_loss(u: f64, tau: f64, h0: f64) -> f64 {
    let v = u / h0;
    h0 * (gaussian_kernel(v) + v * (std_normal_cdf(v) - (1.0 - tau)))
}

/// Derivative of [`smoothed_check_loss`] in `u`.
#[inline]
pub fn smoothed_check_loss_derivative(u: f64, tau: f64, h0: f64) -> f64 {
    std_normal_cdf(u / h0) - (1.0 - tau)
}

/// Default smoothing bandwidth `max(0.05, ((s+1)·ln n / n)^{0.4})`.
pub fn default_h0(s: usize, n: usize) -> f64 {
    let n = n.max(2) as f64;
    (((s + 1) as f64 * n.ln() / n).powf(0.4)).max(0.05)
}

#[derive(Debug, Clone, Copy)]
pub struct SmoothedQrProblem<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: ArrayView1<'a, f64>,
    pub tau: f64,
    pub lambda0: f64,
    pub h0: f64,
    pub penalize_intercept: bool,
}

impl<'a> SmoothedQrProblem<'a> {
    pub fn validate(&self) -> Result<()> {
        ensure_len(self.x.nrows(), self.y.len())?;
        if self.x.nrows() == 0 {
            return Err(DhsqrError::Config("empty design".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(DhsqrError::Domain(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        check_bandwidth(self.h0)?;
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return Err(DhsqrError::Config(format!(
                "lambda0 must be >= 0, got {}",
                self.lambda0
            )));
        }
        Ok(())
    }

    fn penalty_weight(&self, j: usize) -> f64 {
        if j == 0 && !self.penalize_intercept {
            0.0
        } else {
            self.lambda0
        }
    }

    fn penalty(&self, beta: &Array1<f64>) -> f64 {
        beta.iter()
            .enumerate()
            .map(|(j, b)| self.penalty_weight(j) * b.abs())
            .sum()
    }

    fn residuals(&self, beta: &Array1<f64>) -> Array1<f64> {
        &self.y - &self.x.dot(beta)
    }

    fn smooth_loss(&self, resid: &Array1<f64>) -> f64 {
        resid
            .iter()
            .map(|&r| smoothed_check_loss(r, self.tau, self.h0))
            .sum::<f64>()
            / resid.len() as f64
    }

    fn gradient(&self, resid: &Array1<f64>) -> Array1<f64> {
        let n = resid.len() as f64;
        let d = resid.mapv(|r| -smoothed_check_loss_derivative(r, self.tau, self.h0) / n);
        self.x.t().dot(&d)
    }

    /// Smoothed loss plus penalty at `beta`.
    pub fn objective(&self, beta: &Array1<f64>) -> f64 {
        self.smooth_loss(&self.residuals(beta)) + self.penalty(beta)
    }

    /// Smallest `λ₀` for which zero is a fixed point of the proximal map
    /// (over penalized coordinates).
    pub fn lambda_max(&self) -> f64 {
        let grad = self.gradient(&self.y.to_owned());
        grad.iter()
            .enumerate()
            .filter(|(j, _)| *j != 0 || self.penalize_intercept)
            .fold(0.0, |m, (_, g)| m.max(g.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitOptions {
    /// Bound on the ℓ₂ norm of the proximal gradient mapping.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions {
            tol: 1e-6,
            max_iter: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitFit {
    pub beta: CoefficientVector,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

/// Minimizes `(1/n)Σ ℓ(y_i − x_iᵀβ) + λ₀|β|₁` starting from `start`.
pub fn fit_initial(
    problem: &SmoothedQrProblem<'_>,
    start: &CoefficientVector,
    opts: InitOptions,
) -> Result<InitFit> {
    problem.validate()?;
    let n = problem.x.nrows();
    let d = problem.x.ncols();
    ensure_len(d, start.len())?;

    let frob2: f64 = problem.x.iter().map(|v| v * v).sum();
    let mut step = (n as f64 * problem.h0) / frob2.max(f64::MIN_POSITIVE);
    let thresholds: Vec<f64> = (0..d).map(|j| problem.penalty_weight(j)).collect();

    let mut beta = start.as_array().clone();
    let mut resid_beta = problem.residuals(&beta);
    let mut obj_beta = problem.smooth_loss(&resid_beta) + problem.penalty(&beta);
    let mut point = beta.clone();
    let mut resid_point = resid_beta.clone();
    let mut theta = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let loss_point = problem.smooth_loss(&resid_point);
        let grad = problem.gradient(&resid_point);

        let (cand, resid_cand, loss_cand, diff_norm) = loop {
            let cand: Array1<f64> = point
                .iter()
                .zip(grad.iter())
                .zip(thresholds.iter())
                .map(|((&p, &g), &t)| soft_threshold(p - step * g, step * t))
                .collect();
            let resid_cand = problem.residuals(&cand);
            let loss_cand = problem.smooth_loss(&resid_cand);
            let diff = &cand - &point;
            let diff2 = diff.dot(&diff);
            let bound = loss_point + grad.dot(&diff) + diff2 / (2.0 * step);
            if loss_cand <= bound + 1e-14 * loss_point.abs() {
                break (cand, resid_cand, loss_cand, diff2.sqrt());
            }
            step *= 0.5;
            if step < 1e-20 {
                return Err(DhsqrError::NumericalFailure(
                    "line search step underflow".into(),
                ));
            }
        };
        if !loss_cand.is_finite() {
            return Err(DhsqrError::NumericalFailure(
                "non-finite smoothed loss".into(),
            ));
        }

        let obj_cand = loss_cand + problem.penalty(&cand);
        if obj_cand > obj_beta {
            if point != beta {
                // Momentum overshot; restart from the last accepted iterate.
                theta = 1.0;
                point.assign(&beta);
                resid_point.assign(&resid_beta);
                continue;
            }
            // A plain proximal step cannot lower the objective any further.
            converged = diff_norm / step <= opts.tol;
            break;
        }

        let prev = std::mem::replace(&mut beta, cand);
        resid_beta = resid_cand;
        obj_beta = obj_cand;
        if diff_norm / step <= opts.tol {
            converged = true;
            break;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let momentum = (theta - 1.0) / theta_next;
        theta = theta_next;
        if momentum > 0.0 {
            point = &beta + &((&beta - &prev) * momentum);
            resid_point = problem.residuals(&point);
        } else {
            point.assign(&beta);
            resid_point.assign(&resid_beta);
        }
        step *= 1.2;
    }

    Ok(InitFit {
        beta: CoefficientVector::from(beta),
        iterations,
        converged,
        objective: obj_beta,
    })
}

/// A regularization path scored on held-out data.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedFit {
    pub fit: InitFit,
    pub lambda0: f64,
    pub lambdas: Vec<f64>,
    pub scores: Vec<ValidationScore>,
}

/// Fits the descending `grid` with warm starts and keeps the candidate the
/// grid's selection rule picks from validation check losses.
#[allow(clippy::too_many_arguments)]
pub fn fit_validated(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    x_val: ArrayView2<'_, f64>,
    y_val: ArrayView1<'_, f64>,
    tau: f64,
    h0: f64,
    penalize_intercept: bool,
    grid: LambdaGrid,
    opts: InitOptions,
) -> Result<ValidatedFit> {
    let base = SmoothedQrProblem {
        x,
        y,
        tau,
        lambda0: 0.0,
        h0,
        penalize_intercept,
    };
    base.validate()?;
    ensure_len(x.ncols(), x_val.ncols())?;
    let mut lambdas = grid.values(base.lambda_max());
    let mut current = CoefficientVector::zeros(x.ncols());
    let mut fits = Vec::with_capacity(lambdas.len());
    let mut scores = Vec::with_capacity(lambdas.len());
    for &lambda0 in &lambdas {
        let problem = SmoothedQrProblem { lambda0, ..base };
        let fit = fit_initial(&problem, &current, opts)?;
        if !fit.converged {
            log::debug!("initial fit at lambda0={lambda0:e} hit the iteration cap");
        }
        scores.push(check_loss_score(&fit.beta, x_val, y_val, tau)?);
        current = fit.beta.clone();
        fits.push(fit);
        if grid.exhausted(&scores) {
            break;
        }
    }
    let pick = grid.rule.pick(&scores).expect("grid is never empty");
    let fit = fits.swap_remove(pick);
    let lambda0 = lambdas[pick];
    lambdas.truncate(scores.len());
    Ok(ValidatedFit {
        fit,
        lambda0,
        lambdas,
        scores,
    })
}
