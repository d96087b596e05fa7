//! The coordinator/worker estimation loop.
//!
//! Round `t`:
//!
//! 1. the coordinator broadcasts `β̂_{t−1}` to machines `1..m`;
//! 2. every machine `k` (the coordinator included, locally) computes
//!    `z_{n,k}` and `g_k = D̂_{k,h} β̂_{t−1}` at the global bandwidth `h`;
//! 3. the coordinator averages the summaries in shard order and builds
//!
//!    ```text
//!    A = D̂_{1,b}                                  (central Gram at bandwidth b)
//!    a = z_N + D̂_{1,b} β̂_{t−1} − (1/m) Σ_k g_k
//!    ```
//!
//! 4. and solves `min ½βᵀAβ − βᵀa + λ_t|β|₁` warm-started at `β̂_{t−1}`.
//!
//! Only two `(p+1)`-vectors travel upstream per worker; no worker forms or
//! sends a `(p+1)×(p+1)` matrix.

mod bus;
mod schedule;

pub use bus::{
    expected_round_values, ledger_check, Broadcast, CommLedger, InProcessBus, RoundComm, Summary,
    Transport, WorkerSummary,
};
pub use schedule::{kappa, theorem_lambda, LambdaSchedule};

use ndarray::Array1;
use rand::seq::SliceRandom;

use crate::coeffs::CoefficientVector;
use crate::datagen::{stream_rng, Dataset, DatasetShard};
use crate::error::{ensure_len, DhsqrError, Result};
use crate::init::{default_h0, fit_initial, fit_validated, InitOptions, SmoothedQrProblem};
use crate::kernel::BandwidthPlan;
use crate::lasso::{solve, LambdaGrid, PenalizedQuadratic, SolverOptions, SolverReport};
use crate::metrics::{check_loss_score, l2_error};
use crate::par::{self, Execution};
use crate::select::ValidationScore;
use crate::transform::{kernel_gram_with, shard_aggregates_with, PseudoAggregates};

/// How the initial estimator's `λ₀` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitLambda {
    Validated(LambdaGrid),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub lambda0: InitLambda,
    /// Smoothing bandwidth; `None` uses [`default_h0`] with the plan's `s_eff`.
    pub h0: Option<f64>,
    pub opts: InitOptions,
    /// A ready-made initial estimate; when set nothing is fitted.
    pub start: Option<CoefficientVector>,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            lambda0: InitLambda::Validated(LambdaGrid::default()),
            h0: None,
            opts: InitOptions::default(),
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DhsqrConfig {
    pub tau: f64,
    pub plan: BandwidthPlan,
    pub schedule: LambdaSchedule,
    pub iterations: usize,
    pub init: InitConfig,
    pub solver: SolverOptions,
    pub penalize_intercept: bool,
    /// Stop once `|β̂_t − β̂_{t−1}|₂` falls to this value.
    pub early_stop: Option<f64>,
    pub exec: Execution,
}

impl DhsqrConfig {
    pub fn new(tau: f64, plan: BandwidthPlan, iterations: usize) -> Self {
        DhsqrConfig {
            tau,
            plan,
            schedule: LambdaSchedule::default(),
            iterations,
            init: InitConfig::default(),
            solver: SolverOptions::default(),
            penalize_intercept: false,
            early_stop: None,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub t: usize,
    pub beta: CoefficientVector,
    pub lambda_used: f64,
    pub solver: SolverReport,
    pub l2_error_vs_truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DhsqrRun {
    pub initial: CoefficientVector,
    /// `None` when the initial estimate was supplied.
    pub lambda0: Option<f64>,
    pub initial_converged: bool,
    pub h: f64,
    pub b: f64,
    pub traces: Vec<IterationTrace>,
    pub ledger: CommLedger,
    /// Set when a round failed; `traces` then holds the completed rounds.
    pub error: Option<DhsqrError>,
    /// Candidates tried by a tuned schedule, in grid order.
    pub tuning: Vec<TuningCandidate>,
}

/// One candidate constant of a tuned schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningCandidate {
    pub c: f64,
    /// Mean validation check loss of the candidate's final estimate;
    /// infinite when its run failed.
    pub loss: f64,
    pub std_err: f64,
    pub comm_values: usize,
}

impl DhsqrRun {
    /// The last completed estimate (the initial one if no round finished).
    pub fn final_beta(&self) -> &CoefficientVector {
        self.traces.last().map(|t| &t.beta).unwrap_or(&self.initial)
    }

    pub fn all_converged(&self) -> bool {
        self.error.is_none() && self.traces.iter().all(|t| t.solver.converged)
    }
}

/// A worker's contribution for one round, at the global bandwidth `h`.
pub fn worker_step(
    shard: &DatasetShard,
    beta_prev: &CoefficientVector,
    tau: f64,
    h: f64,
    exec: Execution,
) -> Result<WorkerSummary> {
    let PseudoAggregates { z, g, .. } =
        shard_aggregates_with(shard, beta_prev, tau, h, false, exec)?;
    Ok(WorkerSummary {
        shard_id: shard.shard_id,
        z_nk: z,
        g_k: g,
    })
}

/// Builds round `t`'s lasso problem from all `m` summaries (including the
/// coordinator's own) and the central shard's Gram at bandwidth `b`.
#[allow(clippy::too_many_arguments)]
pub fn coordinator_assemble(
    summaries: &[WorkerSummary],
    m: usize,
    central: &DatasetShard,
    beta_prev: &CoefficientVector,
    b: f64,
    lambda: f64,
    penalize_intercept: bool,
    exec: Execution,
) -> Result<PenalizedQuadratic> {
    let d = beta_prev.len();
    let mut ordered: Vec<&WorkerSummary> = summaries.iter().collect();
    ordered.sort_by_key(|s| s.shard_id);
    let ids: Vec<usize> = ordered.iter().map(|s| s.shard_id).collect();
    if ids != (0..m).collect::<Vec<_>>() {
        return Err(DhsqrError::ProtocolViolation(format!(
            "expected one summary from each of shards 0..{m}, got {ids:?}"
        )));
    }
    let mut z_sum = Array1::<f64>::zeros(d);
    let mut g_sum = Array1::<f64>::zeros(d);
    for s in &ordered {
        ensure_len(d, s.z_nk.len())?;
        ensure_len(d, s.g_k.len())?;
        z_sum += &s.z_nk;
        g_sum += &s.g_k;
    }
    let inv_m = 1.0 / m as f64;
    let gram = kernel_gram_with(central, beta_prev, b, exec)?;
    let a_vec = z_sum * inv_m + gram.dot(beta_prev.as_array()) - g_sum * inv_m;
    Ok(PenalizedQuadratic {
        a_mat: gram,
        a_vec,
        lambda,
        penalize_intercept,
    })
}

fn validate_shards(shards: &[DatasetShard]) -> Result<(usize, usize)> {
    let first = shards
        .first()
        .ok_or_else(|| DhsqrError::Config("at least one shard is required".into()))?;
    let (n, d) = (first.n(), first.x.ncols());
    for (k, s) in shards.iter().enumerate() {
        if s.shard_id != k {
            return Err(DhsqrError::Config(format!(
                "shard at position {k} has id {}",
                s.shard_id
            )));
        }
        if s.n() != n || s.x.ncols() != d {
            return Err(DhsqrError::Config("shards must have equal sizes".into()));
        }
    }
    Ok((n, d))
}

/// Fits the initial estimator on the central shard, returning it with the
/// `λ₀` used and whether the fit converged.
pub fn initial_estimate(
    central: &DatasetShard,
    validation: Option<&Dataset>,
    tau: f64,
    s_eff: usize,
    penalize_intercept: bool,
    init: &InitConfig,
) -> Result<(CoefficientVector, Option<f64>, bool)> {
    if let Some(start) = &init.start {
        ensure_len(central.x.ncols(), start.len())?;
        return Ok((start.clone(), None, true));
    }
    let h0 = init.h0.unwrap_or_else(|| default_h0(s_eff, central.n()));
    match &init.lambda0 {
        InitLambda::Fixed(lambda0) => {
            let problem = SmoothedQrProblem {
                x: central.x.view(),
                y: central.y.view(),
                tau,
                lambda0: *lambda0,
                h0,
                penalize_intercept,
            };
            let fit = fit_initial(
                &problem,
                &CoefficientVector::zeros(central.x.ncols()),
                init.opts,
            )?;
            Ok((fit.beta, Some(*lambda0), fit.converged))
        }
        InitLambda::Validated(grid) => {
            let val = validation.ok_or_else(|| {
                DhsqrError::Config("validated lambda0 needs a validation set".into())
            })?;
            let v = fit_validated(
                central.x.view(),
                central.y.view(),
                val.x.view(),
                val.y.view(),
                tau,
                h0,
                penalize_intercept,
                *grid,
                init.opts,
            )?;
            Ok((v.fit.beta, Some(v.lambda0), v.fit.converged))
        }
    }
}

fn solve_round(
    problem: &PenalizedQuadratic,
    beta_prev: &CoefficientVector,
    t: usize,
    config: &DhsqrConfig,
    validation: Option<&Dataset>,
) -> Result<(SolverReport, f64)> {
    let plan = &config.plan;
    match &config.schedule {
        LambdaSchedule::Fixed(lambda) => Ok((
            solve(&problem.with_lambda(*lambda), beta_prev, config.solver)?,
            *lambda,
        )),
        LambdaSchedule::Theorem { c } => {
            let lambda = theorem_lambda(*c, t, plan.s_eff, plan.n_total, plan.n_local);
            Ok((
                solve(&problem.with_lambda(lambda), beta_prev, config.solver)?,
                lambda,
            ))
        }
        LambdaSchedule::TunedTheorem { .. } => Err(DhsqrError::Config(
            "a tuned schedule cannot pick λ round by round".into(),
        )),
        LambdaSchedule::Validated(grid) => {
            let val = validation.ok_or_else(|| {
                DhsqrError::Config("validated lambda schedule needs a validation set".into())
            })?;
            let lambdas = grid.values(problem.lambda_max());
            let mut start = beta_prev.clone();
            let mut reports = Vec::with_capacity(lambdas.len());
            let mut scores = Vec::with_capacity(lambdas.len());
            for &lambda in &lambdas {
                let report = solve(&problem.with_lambda(lambda), &start, config.solver)?;
                scores.push(check_loss_score(
                    &report.beta,
                    val.x.view(),
                    val.y.view(),
                    config.tau,
                )?);
                start = report.beta.clone();
                reports.push(report);
                if grid.exhausted(&scores) {
                    break;
                }
            }
            let pick = grid.rule.pick(&scores).expect("grid is never empty");
            let report = reports.swap_remove(pick);
            Ok((report, lambdas[pick]))
        }
    }
}

/// Runs the distributed estimator over `shards` (shard 0 is the coordinator).
///
/// `seed` only permutes the order in which worker summaries arrive at the
/// coordinator; results do not depend on it. `truth`, when given, fills in
/// each round's ℓ₂ error.
///
/// With [`LambdaSchedule::TunedTheorem`] every candidate `C` is a complete
/// run from the same initial estimate over its own [`InProcessBus`]; the
/// returned run is the chosen one and `tuning` lists all candidates.
pub fn run_dhsqr(
    shards: &[DatasetShard],
    validation: Option<&Dataset>,
    truth: Option<&CoefficientVector>,
    config: &DhsqrConfig,
    seed: u64,
) -> Result<DhsqrRun> {
    let LambdaSchedule::TunedTheorem { c_max, grid } = &config.schedule else {
        return run_dhsqr_on(
            shards,
            validation,
            truth,
            config,
            seed,
            &mut InProcessBus::new(),
        );
    };
    let start = prepare(shards, validation, truth, config)?;
    let val = validation
        .ok_or_else(|| DhsqrError::Config("a tuned schedule needs a validation set".into()))?;
    let mut runs = Vec::with_capacity(grid.len);
    let mut scores = Vec::with_capacity(grid.len);
    for c in grid.values(*c_max) {
        let mut cfg = config.clone();
        cfg.schedule = LambdaSchedule::Theorem { c };
        let run = rounds(
            shards,
            validation,
            truth,
            &cfg,
            seed,
            &mut InProcessBus::new(),
            start.clone(),
        )?;
        let beta = run.final_beta();
        let score = if run.error.is_none() && beta.is_finite() {
            check_loss_score(beta, val.x.view(), val.y.view(), config.tau)?
        } else {
            ValidationScore::failed()
        };
        scores.push(score);
        runs.push((c, run));
        if grid.exhausted(&scores) {
            break;
        }
    }
    let tuning: Vec<TuningCandidate> = runs
        .iter()
        .zip(&scores)
        .map(|((c, run), score)| TuningCandidate {
            c: *c,
            loss: score.mean,
            std_err: score.std_err,
            comm_values: run.ledger.total_values(),
        })
        .collect();
    let pick = grid.rule.pick(&scores).expect("grid is never empty");
    let (_, mut run) = runs.swap_remove(pick);
    run.tuning = tuning;
    Ok(run)
}

/// [`run_dhsqr`] over a caller-supplied transport. Tuned schedules are
/// rejected here since each candidate needs a fresh ledger.
pub fn run_dhsqr_on<B: Transport>(
    shards: &[DatasetShard],
    validation: Option<&Dataset>,
    truth: Option<&CoefficientVector>,
    config: &DhsqrConfig,
    seed: u64,
    bus: &mut B,
) -> Result<DhsqrRun> {
    if matches!(config.schedule, LambdaSchedule::TunedTheorem { .. }) {
        return Err(DhsqrError::Config(
            "tuned schedules run through run_dhsqr".into(),
        ));
    }
    let start = prepare(shards, validation, truth, config)?;
    rounds(shards, validation, truth, config, seed, bus, start)
}

#[derive(Debug, Clone)]
struct Start {
    initial: CoefficientVector,
    lambda0: Option<f64>,
    initial_converged: bool,
    h: f64,
    b: f64,
}

fn prepare(
    shards: &[DatasetShard],
    validation: Option<&Dataset>,
    truth: Option<&CoefficientVector>,
    config: &DhsqrConfig,
) -> Result<Start> {
    let (n, d) = validate_shards(shards)?;
    let m = shards.len();
    if config.iterations == 0 {
        return Err(DhsqrError::Config(
            "at least one iteration is required".into(),
        ));
    }
    if !(config.tau > 0.0 && config.tau < 1.0) {
        return Err(DhsqrError::Domain(format!(
            "tau must lie in (0, 1), got {}",
            config.tau
        )));
    }
    if config.plan.n_local != n || config.plan.n_total != n * m {
        return Err(DhsqrError::Config(format!(
            "bandwidth plan sizes (N={}, n={}) do not match the shards (N={}, n={n})",
            config.plan.n_total,
            config.plan.n_local,
            n * m
        )));
    }
    if let Some(v) = validation {
        ensure_len(d, v.x.ncols())?;
    }
    if let Some(b) = truth {
        ensure_len(d, b.len())?;
    }
    let (h, b) = config.plan.resolve()?;
    let (initial, lambda0, initial_converged) = initial_estimate(
        &shards[0],
        validation,
        config.tau,
        config.plan.s_eff,
        config.penalize_intercept,
        &config.init,
    )?;
    Ok(Start {
        initial,
        lambda0,
        initial_converged,
        h,
        b,
    })
}

fn rounds<B: Transport>(
    shards: &[DatasetShard],
    validation: Option<&Dataset>,
    truth: Option<&CoefficientVector>,
    config: &DhsqrConfig,
    seed: u64,
    bus: &mut B,
    start: Start,
) -> Result<DhsqrRun> {
    let m = shards.len();
    let central = &shards[0];
    let Start {
        initial,
        lambda0,
        initial_converged,
        h,
        b,
    } = start;
    let mut run = DhsqrRun {
        initial: initial.clone(),
        lambda0,
        initial_converged,
        h,
        b,
        traces: Vec::with_capacity(config.iterations),
        ledger: CommLedger::default(),
        error: None,
        tuning: Vec::new(),
    };
    let recipients: Vec<usize> = (1..m).collect();
    let mut arrival_rng = stream_rng(seed, 3);
    let mut beta_prev = initial;

    for t in 1..=config.iterations {
        let round = (|| -> Result<IterationTrace> {
            bus.broadcast(
                Broadcast {
                    t,
                    beta: beta_prev.clone(),
                },
                &recipients,
            );
            let inbound: Vec<Broadcast> = recipients
                .iter()
                .map(|&w| {
                    bus.receive_broadcast(w).ok_or_else(|| {
                        DhsqrError::ProtocolViolation(format!(
                            "worker {w} received no broadcast in round {t}"
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let worker_ids: Vec<usize> = (0..m).collect();
            let computed = par::map_slice(config.exec, &worker_ids, |&k| {
                let beta = if k == 0 {
                    &beta_prev
                } else {
                    &inbound[k - 1].beta
                };
                worker_step(&shards[k], beta, config.tau, h, Execution::Sequential)
            });
            let mut local = None;
            let mut remote = Vec::with_capacity(m.saturating_sub(1));
            for summary in computed {
                let summary = summary?;
                if summary.shard_id == 0 {
                    local = Some(summary);
                } else {
                    remote.push(summary);
                }
            }
            remote.shuffle(&mut arrival_rng);
            for summary in remote {
                bus.upload(Summary { t, summary });
            }
            let mut received: Vec<WorkerSummary> = Vec::with_capacity(m);
            received.extend(local);
            for msg in bus.collect() {
                if msg.t != t {
                    return Err(DhsqrError::ProtocolViolation(format!(
                        "summary for round {} arrived during round {t}",
                        msg.t
                    )));
                }
                received.push(msg.summary);
            }
            let problem = coordinator_assemble(
                &received,
                m,
                central,
                &beta_prev,
                b,
                0.0,
                config.penalize_intercept,
                config.exec,
            )?;
            let (solver, lambda_used) = solve_round(&problem, &beta_prev, t, config, validation)?;
            let l2 = truth.map(|b| l2_error(&solver.beta, b)).transpose()?;
            Ok(IterationTrace {
                t,
                beta: solver.beta.clone(),
                lambda_used,
                solver,
                l2_error_vs_truth: l2,
            })
        })();
        match round {
            Ok(trace) => {
                let step = l2_error(&trace.beta, &beta_prev)?;
                beta_prev = trace.beta.clone();
                run.traces.push(trace);
                if config.early_stop.is_some_and(|tol| step <= tol) {
                    break;
                }
            }
            Err(e) => {
                log::warn!("round {t} aborted: {e}");
                run.error = Some(e);
                break;
            }
        }
    }
    run.ledger = bus.ledger().clone();
    Ok(run)
}
