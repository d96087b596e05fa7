//! The experiment grid runner.

use std::time::Instant;

use dhsqr::baselines::{avg_dc, pooled_dhsqr, AvgDcConfig};
use dhsqr::datagen::{gen_dataset, shard_dataset, true_quantile_coeffs, Dataset};
use dhsqr::engine::{initial_estimate, run_dhsqr, DhsqrConfig, DhsqrRun};
use dhsqr::metrics::{l2_error, pqe, support_metrics, ZERO_TOL};
use dhsqr::{CoefficientVector, DhsqrError};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;

use crate::config::{Cell, ExperimentConfig, Method, Model, Noise};
use crate::error::{HarnessError, Result};

/// One row of the long-format results table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub cell: usize,
    pub replicate: usize,
    pub model: Model,
    pub noise: Noise,
    pub tau: f64,
    pub n_total: usize,
    pub n_local: usize,
    pub m: usize,
    pub iterations: usize,
    pub seed: u64,
    pub l2_error: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Present when the config asks for a test split.
    pub pqe: Option<f64>,
    pub runtime_ms: f64,
    pub comm_values: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// One estimate along an iterative run; `t = 0` is the initial estimate.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TraceRow {
    pub method: Method,
    pub cell: usize,
    pub replicate: usize,
    pub seed: u64,
    pub t: usize,
    pub l2_error: f64,
    pub f1: f64,
    pub nonzeros: usize,
    pub lambda: Option<f64>,
    pub sweeps: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridOutput {
    /// Ordered by cell, replicate, then method in config order.
    pub records: Vec<RunRecord>,
    pub traces: Vec<TraceRow>,
}

impl GridOutput {
    pub fn all_completed(&self) -> bool {
        self.records.iter().all(|r| r.error.is_none())
    }
}

/// The data seed of one replicate; distinct per (cell, replicate).
pub fn replicate_seed(base: u64, cell: usize, replicate: usize) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(base);
    rng.set_stream(((cell as u64) << 32) | replicate as u64);
    rng.next_u64()
}

/// Effective worker-pool size: the config's `threads` (or all cores),
/// capped by `DHSQR_THREADS` when set.
pub fn pool_size(cfg: &ExperimentConfig) -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let wanted = cfg.threads.unwrap_or(available);
    match std::env::var("DHSQR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        Some(cap) if cap > 0 => wanted.min(cap),
        _ => wanted,
    }
    .max(1)
}

/// Runs every (cell, replicate) job and gathers rows in a fixed order.
pub fn run_experiment_grid(cfg: &ExperimentConfig) -> Result<GridOutput> {
    cfg.validate()?;
    let jobs: Vec<(Cell, usize)> = cfg
        .cells()
        .into_iter()
        .flat_map(|c| (0..cfg.replicates).map(move |r| (c, r)))
        .collect();
    let results = run_jobs(cfg, &jobs)?;
    let mut out = GridOutput::default();
    for (records, traces) in results {
        out.records.extend(records);
        out.traces.extend(traces);
    }
    Ok(out)
}

#[cfg(feature = "parallel")]
fn run_jobs(
    cfg: &ExperimentConfig,
    jobs: &[(Cell, usize)],
) -> Result<Vec<(Vec<RunRecord>, Vec<TraceRow>)>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(pool_size(cfg))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|(c, r)| run_replicate(cfg, c, *r))
            .collect()
    })
}

#[cfg(not(feature = "parallel"))]
fn run_jobs(
    cfg: &ExperimentConfig,
    jobs: &[(Cell, usize)],
) -> Result<Vec<(Vec<RunRecord>, Vec<TraceRow>)>> {
    jobs.iter()
        .map(|(c, r)| run_replicate(cfg, c, *r))
        .collect()
}

struct Split {
    shards: Vec<dhsqr::DatasetShard>,
    train: Dataset,
    validation: Dataset,
    test: Option<Dataset>,
    truth: CoefficientVector,
}

fn split_replicate(cfg: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<Split> {
    let spec = cfg.model_spec(cell.model, cell.noise);
    let truth = true_quantile_coeffs(&spec, cell.tau)?;
    let n_val = cfg.validation_rows(cell);
    let rows = cell.n_total + n_val + cfg.test_size;
    let data = gen_dataset(&spec, rows, seed)?;
    let train = data.slice_rows(0, cell.n_total);
    let validation = data.slice_rows(cell.n_total, cell.n_total + n_val);
    let test = (cfg.test_size > 0).then(|| data.slice_rows(cell.n_total + n_val, rows));
    let shards = shard_dataset(&train, cell.machines(), seed)?;
    Ok(Split {
        shards,
        train,
        validation,
        test,
        truth,
    })
}

/// Runs all configured methods on one freshly generated dataset.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    cell: &Cell,
    replicate: usize,
) -> Result<(Vec<RunRecord>, Vec<TraceRow>)> {
    let seed = replicate_seed(cfg.seed, cell.index, replicate);
    let split = split_replicate(cfg, cell, seed)?;
    let dcfg = cfg.dhsqr_config(cell)?;
    let true_support = split.truth.support(0.0);
    let blank = RunRecord {
        method: Method::Dhsqr,
        cell: cell.index,
        replicate,
        model: cell.model,
        noise: cell.noise,
        tau: cell.tau,
        n_total: cell.n_total,
        n_local: cell.n_local,
        m: cell.machines(),
        iterations: cfg.iterations,
        seed,
        l2_error: f64::NAN,
        precision: f64::NAN,
        recall: f64::NAN,
        f1: f64::NAN,
        pqe: None,
        runtime_ms: 0.0,
        comm_values: 0,
        converged: false,
        error: None,
    };
    let score = |rec: &mut RunRecord, beta: &CoefficientVector| -> Result<()> {
        let s = support_metrics(beta, &true_support, ZERO_TOL);
        rec.l2_error = l2_error(beta, &split.truth)?;
        rec.precision = s.precision;
        rec.recall = s.recall;
        rec.f1 = s.f1;
        if let Some(test) = &split.test {
            rec.pqe = Some(pqe(beta, test.x.view(), test.y.view(), cell.tau)?);
        }
        Ok(())
    };

    let mut records = Vec::with_capacity(cfg.methods.len());
    let mut traces = Vec::new();
    let mut dhsqr_initial: Option<CoefficientVector> = None;
    for &method in &cfg.methods {
        let mut rec = RunRecord {
            method,
            ..blank.clone()
        };
        let clock = Instant::now();
        let outcome: std::result::Result<(), DhsqrError> = (|| {
            match method {
                Method::Dhsqr => {
                    let run = run_dhsqr(
                        &split.shards,
                        Some(&split.validation),
                        Some(&split.truth),
                        &dcfg,
                        seed,
                    )?;
                    rec.runtime_ms = elapsed_ms(clock);
                    score(&mut rec, run.final_beta()).map_err(into_core)?;
                    rec.comm_values = run.ledger.total_values();
                    rec.converged = run.all_converged() && run.initial_converged;
                    rec.error = run.error.as_ref().map(|e| e.to_string());
                    traces.extend(trace_rows(
                        method,
                        cell.index,
                        replicate,
                        seed,
                        &run,
                        &split.truth,
                        &true_support,
                    ));
                    dhsqr_initial = Some(run.initial.clone());
                }
                Method::AvgDc => {
                    let avg_cfg = AvgDcConfig {
                        init: dcfg.init.clone(),
                        penalize_intercept: dcfg.penalize_intercept,
                        exec: dcfg.exec,
                        ..AvgDcConfig::new(cell.tau, dcfg.plan.s_eff)
                    };
                    let res = avg_dc(&split.shards, &avg_cfg)?;
                    rec.runtime_ms = elapsed_ms(clock);
                    score(&mut rec, &res.beta).map_err(into_core)?;
                    // One upload of a local estimate per remote machine.
                    rec.comm_values = (cell.machines() - 1) * (cfg.p + 1);
                    rec.converged = res.per_machine.iter().flatten().all(|f| f.converged);
                }
                Method::Pooled => {
                    // Start from the coordinator's estimate so the baseline
                    // differs from DHSQR only in the Hessian it uses.
                    let start = match &dhsqr_initial {
                        Some(b) => b.clone(),
                        None => {
                            initial_estimate(
                                &split.shards[0],
                                Some(&split.validation),
                                cell.tau,
                                dcfg.plan.s_eff,
                                dcfg.penalize_intercept,
                                &dcfg.init,
                            )?
                            .0
                        }
                    };
                    let mut pcfg: DhsqrConfig = dcfg.clone();
                    pcfg.init.start = Some(start);
                    let res = pooled_dhsqr(
                        &split.train,
                        Some(&split.validation),
                        Some(&split.truth),
                        &pcfg,
                        seed,
                    )?;
                    rec.runtime_ms = elapsed_ms(clock);
                    score(&mut rec, &res.beta).map_err(into_core)?;
                    let run = res.run.expect("pooled runs keep their trace");
                    rec.comm_values = run.ledger.total_values();
                    rec.converged = run.all_converged();
                    rec.error = run.error.as_ref().map(|e| e.to_string());
                    traces.extend(trace_rows(
                        method,
                        cell.index,
                        replicate,
                        seed,
                        &run,
                        &split.truth,
                        &true_support,
                    ));
                }
            }
            Ok(())
        })();
        if let Err(e) = outcome {
            log::warn!(
                "{} failed on cell {} replicate {replicate}: {e}",
                method.label(),
                cell.index
            );
            rec.runtime_ms = elapsed_ms(clock);
            rec.converged = false;
            rec.error = Some(e.to_string());
        }
        records.push(rec);
    }
    Ok((records, traces))
}

fn into_core(e: HarnessError) -> DhsqrError {
    match e {
        HarnessError::Core(c) => c,
        other => DhsqrError::NumericalFailure(other.to_string()),
    }
}

fn elapsed_ms(clock: Instant) -> f64 {
    clock.elapsed().as_secs_f64() * 1e3
}

fn trace_rows(
    method: Method,
    cell: usize,
    replicate: usize,
    seed: u64,
    run: &DhsqrRun,
    truth: &CoefficientVector,
    support: &[usize],
) -> Vec<TraceRow> {
    let row = |t: usize, beta: &CoefficientVector| TraceRow {
        method,
        cell,
        replicate,
        seed,
        t,
        l2_error: l2_error(beta, truth).unwrap_or(f64::NAN),
        f1: support_metrics(beta, support, ZERO_TOL).f1,
        nonzeros: beta.support(ZERO_TOL).len(),
        lambda: None,
        sweeps: 0,
        kkt_residual: 0.0,
        converged: true,
    };
    let mut rows = vec![TraceRow {
        lambda: run.lambda0,
        converged: run.initial_converged,
        ..row(0, &run.initial)
    }];
    rows.extend(run.traces.iter().map(|tr| TraceRow {
        lambda: Some(tr.lambda_used),
        sweeps: tr.solver.sweeps,
        kkt_residual: tr.solver.kkt_residual,
        converged: tr.solver.converged,
        ..row(tr.t, &tr.beta)
    }));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicate_seeds_are_distinct_and_stable() {
        let a = replicate_seed(7, 0, 0);
        assert_eq!(a, replicate_seed(7, 0, 0));
        assert_ne!(a, replicate_seed(7, 0, 1));
        assert_ne!(a, replicate_seed(7, 1, 0));
        assert_ne!(a, replicate_seed(8, 0, 0));
    }
}
