//! Estimation and support-recovery metrics.

use std::collections::BTreeSet;

use ndarray::{ArrayView1, ArrayView2};

use crate::coeffs::CoefficientVector;
use crate::error::{ensure_len, Result};
use crate::init::check_loss;
use crate::select::ValidationScore;

/// Entries with magnitude at or below this count as zero in support metrics.
pub const ZERO_TOL: f64 = 1e-8;

/// `|β̂ − β|₂` over all `p+1` coordinates.
pub fn l2_error(beta_hat: &CoefficientVector, beta_true: &CoefficientVector) -> Result<f64> {
    ensure_len(beta_true.len(), beta_hat.len())?;
    Ok(beta_hat
        .iter()
        .zip(beta_true.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl SupportMetrics {
    /// Scores from confusion counts.
    ///
    /// Empty estimated support: precision is 1 if the truth is also empty and
    /// 0 otherwise. Empty truth: recall is 1. F1 is zero whenever precision or
    /// recall is zero.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 {
            if fn_ == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            1.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision > 0.0 && recall > 0.0 {
            2.0 / (1.0 / recall + 1.0 / precision)
        } else {
            0.0
        };
        SupportMetrics {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Precision/recall/F1 of `{j ≥ 1 : |β̂_j| > zero_tol}` against `true_support`.
pub fn support_metrics(
    beta_hat: &CoefficientVector,
    true_support: &[usize],
    zero_tol: f64,
) -> SupportMetrics {
    let estimated: BTreeSet<usize> = beta_hat.support(zero_tol).into_iter().collect();
    let truth: BTreeSet<usize> = true_support.iter().copied().filter(|&j| j >= 1).collect();
    let tp = estimated.intersection(&truth).count();
    let fp = estimated.len() - tp;
    let fn_ = truth.len() - tp;
    SupportMetrics::from_counts(tp, fp, fn_)
}

/// Mean check loss `(1/n) Σ ρ_τ(y_i − x_iᵀβ)`.
pub fn check_loss_eval(
    beta: &CoefficientVector,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    tau: f64,
) -> Result<f64> {
    Ok(pqe(beta, x, y, tau)? / y.len().max(1) as f64)
}

/// Per-row check losses on a held-out set.
pub fn check_loss_score(
    beta: &CoefficientVector,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    tau: f64,
) -> Result<ValidationScore> {
    ensure_len(x.ncols(), beta.len())?;
    ensure_len(x.nrows(), y.len())?;
    let fitted = x.dot(beta.as_array());
    let losses = ndarray::Zip::from(&y)
        .and(&fitted)
        .map_collect(|yi, fi| check_loss(yi - fi, tau));
    Ok(ValidationScore::from_losses(losses))
}

/// Predicted quantile error: the sum (not mean) of check losses.
pub fn pqe(
    beta: &CoefficientVector,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    tau: f64,
) -> Result<f64> {
    ensure_len(x.ncols(), beta.len())?;
    ensure_len(x.nrows(), y.len())?;
    let fitted = x.dot(beta.as_array());
    Ok(y.iter()
        .zip(fitted.iter())
        .map(|(yi, fi)| check_loss(yi - fi, tau))
        .sum())
}
