//! Comparison estimators: averaged divide-and-conquer and the pooled
//! single-machine version of the iterative estimator.

use ndarray::Array1;

use crate::coeffs::CoefficientVector;
use crate::datagen::{Dataset, DatasetShard};
use crate::engine::{run_dhsqr, DhsqrConfig, DhsqrRun, InitConfig, InitLambda};
use crate::error::{DhsqrError, Result};
use crate::init::{default_h0, fit_initial, fit_validated, SmoothedQrProblem};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineMethod {
    AvgDc,
    PooledDhsqr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub shard_id: usize,
    pub beta: CoefficientVector,
    pub lambda0: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub method: BaselineMethod,
    pub beta: CoefficientVector,
    /// Avg-DC only.
    pub per_machine: Option<Vec<LocalFit>>,
    /// Pooled only: the underlying single-machine run.
    pub run: Option<DhsqrRun>,
}

/// Settings for each machine's local penalized quantile fit.
#[derive(Debug, Clone, PartialEq)]
pub struct AvgDcConfig {
    pub tau: f64,
    pub s_eff: usize,
    pub init: InitConfig,
    /// Share of each shard held out locally to pick `λ₀`.
    pub holdout_fraction: f64,
    pub penalize_intercept: bool,
    pub exec: Execution,
}

impl AvgDcConfig {
    pub fn new(tau: f64, s_eff: usize) -> Self {
        AvgDcConfig {
            tau,
            s_eff,
            init: InitConfig::default(),
            holdout_fraction: 0.1,
            penalize_intercept: false,
            exec: Execution::default(),
        }
    }
}

fn local_fit(shard: &DatasetShard, cfg: &AvgDcConfig) -> Result<LocalFit> {
    let n = shard.n();
    match &cfg.init.lambda0 {
        InitLambda::Fixed(lambda0) => {
            let h0 = cfg.init.h0.unwrap_or_else(|| default_h0(cfg.s_eff, n));
            let problem = SmoothedQrProblem {
                x: shard.x.view(),
                y: shard.y.view(),
                tau: cfg.tau,
                lambda0: *lambda0,
                h0,
                penalize_intercept: cfg.penalize_intercept,
            };
            let fit = fit_initial(
                &problem,
                &CoefficientVector::zeros(shard.x.ncols()),
                cfg.init.opts,
            )?;
            Ok(LocalFit {
                shard_id: shard.shard_id,
                beta: fit.beta,
                lambda0: *lambda0,
                converged: fit.converged,
            })
        }
        InitLambda::Validated(grid) => {
            let held = ((n as f64) * cfg.holdout_fraction).round() as usize;
            if held == 0 || held >= n {
                return Err(DhsqrError::Config(format!(
                    "holdout fraction {} leaves no train/validation split of {n} rows",
                    cfg.holdout_fraction
                )));
            }
            let train = n - held;
            let h0 = cfg.init.h0.unwrap_or_else(|| default_h0(cfg.s_eff, train));
            let xt = shard.x.slice(ndarray::s![..train, ..]);
            let yt = shard.y.slice(ndarray::s![..train]);
            let xv = shard.x.slice(ndarray::s![train.., ..]);
            let yv = shard.y.slice(ndarray::s![train..]);
            let v = fit_validated(
                xt,
                yt,
                xv,
                yv,
                cfg.tau,
                h0,
                cfg.penalize_intercept,
                *grid,
                cfg.init.opts,
            )?;
            Ok(LocalFit {
                shard_id: shard.shard_id,
                beta: v.fit.beta,
                lambda0: v.lambda0,
                converged: v.fit.converged,
            })
        }
    }
}

/// Fits every shard independently and averages the coefficient vectors
/// (intercept included) in shard order.
pub fn avg_dc(shards: &[DatasetShard], cfg: &AvgDcConfig) -> Result<BaselineResult> {
    if shards.is_empty() {
        return Err(DhsqrError::Config("at least one shard is required".into()));
    }
    let fits: Vec<LocalFit> = par::map_slice(cfg.exec, shards, |s| local_fit(s, cfg))
        .into_iter()
        .collect::<Result<_>>()?;
    let converged: Vec<&LocalFit> = fits.iter().filter(|f| f.converged).collect();
    let used: Vec<&LocalFit> = if converged.is_empty() {
        log::warn!("no local fit converged; averaging all {} fits", fits.len());
        fits.iter().collect()
    } else {
        if converged.len() < fits.len() {
            log::warn!(
                "{} of {} local fits did not converge and are left out of the average",
                fits.len() - converged.len(),
                fits.len()
            );
        }
        converged
    };
    let d = shards[0].x.ncols();
    let mut sum = Array1::<f64>::zeros(d);
    for f in &used {
        sum += f.beta.as_array();
    }
    sum /= used.len() as f64;
    Ok(BaselineResult {
        method: BaselineMethod::AvgDc,
        beta: CoefficientVector::from(sum),
        per_machine: Some(fits),
        run: None,
    })
}

/// The iterative estimator with all data on one machine and `b = h`.
///
/// `config.plan` is rewritten to `N = n = data.n()` with the local bandwidth
/// tied to the global one.
pub fn pooled_dhsqr(
    data: &Dataset,
    validation: Option<&Dataset>,
    truth: Option<&CoefficientVector>,
    config: &DhsqrConfig,
    seed: u64,
) -> Result<BaselineResult> {
    let shard = DatasetShard::new(0, data.x.clone(), data.y.clone())?;
    let mut cfg = config.clone();
    cfg.plan.n_total = data.n();
    cfg.plan.n_local = data.n();
    cfg.plan.tie_local_to_global = true;
    let run = run_dhsqr(std::slice::from_ref(&shard), validation, truth, &cfg, seed)?;
    Ok(BaselineResult {
        method: BaselineMethod::PooledDhsqr,
        beta: run.final_beta().clone(),
        per_machine: None,
        run: Some(run),
    })
}
